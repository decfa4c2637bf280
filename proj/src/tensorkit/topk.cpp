#include "fuzzyseg/topk.hpp"

#include <string>

#include "fuzzyseg/errors.hpp"

namespace fuzzyseg {

void topk_indices_into(std::span<const double> values, std::span<std::size_t> out) {
  const std::size_t k = out.size();
  if (k == 0 || k > values.size()) {
    throw ArgumentError("topk: K=" + std::to_string(k) + " must be in [1, " +
                        std::to_string(values.size()) + "]");
  }
  // Insertion into a sorted prefix; strict '>' keeps earlier indices first.
  std::size_t filled = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (filled == k && !(v > values[out[k - 1]])) continue;
    std::size_t pos = filled < k ? filled++ : k - 1;
    while (pos > 0 && v > values[out[pos - 1]]) {
      out[pos] = out[pos - 1];
      --pos;
    }
    out[pos] = i;
  }
}

std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k) {
  if (k == 0 || k > values.size()) {
    throw ArgumentError("topk: K=" + std::to_string(k) + " must be in [1, " +
                        std::to_string(values.size()) + "]");
  }
  std::vector<std::size_t> out(k);
  topk_indices_into(values, out);
  return out;
}

std::size_t argmax_index(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace fuzzyseg
