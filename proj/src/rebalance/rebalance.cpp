#include "fuzzyseg/rebalance.hpp"

#include <algorithm>
#include <string>

#include "fuzzyseg/errors.hpp"

namespace fuzzyseg {

std::vector<double> class_frequencies(const LabelMap& assignments, const Tensor& valid_mask,
                                      std::size_t num_classes) {
  if (!valid_mask.empty() && valid_mask.shape() != assignments.shape) {
    throw ArgumentError("class_frequencies: mask " + shape_to_string(valid_mask.shape()) +
                        " does not match assignments " + shape_to_string(assignments.shape));
  }
  std::vector<double> counts(num_classes, 0.0);
  for (std::size_t i = 0; i < assignments.numel(); ++i) {
    if (!valid_mask.empty() && valid_mask[i] == 0.0) continue;
    const int c = assignments.values[i];
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
      throw ArgumentError("class_frequencies: class " + std::to_string(c) + " out of range");
    }
    counts[static_cast<std::size_t>(c)] += 1.0;
  }
  return counts;
}

std::vector<double> class_frequencies(const FuzzyLabelMap& fuzzy, const Tensor& valid_mask) {
  return class_frequencies(fuzzy_argmax(fuzzy), valid_mask, fuzzy.num_classes());
}

double median_of(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("median of an empty vector");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

ClassWeightVector class_weights(std::span<const double> frequencies, double epsilon,
                                std::optional<double> cap) {
  if (frequencies.empty()) throw ArgumentError("class_weights: no classes");
  if (!(epsilon > 0.0)) throw ArgumentError("class_weights: epsilon must be positive");
  if (cap && !(*cap > 0.0)) throw ArgumentError("class_weights: cap must be positive");
  ClassWeightVector out;
  out.epsilon = epsilon;
  out.frequencies.assign(frequencies.begin(), frequencies.end());
  const double med = median_of(frequencies);
  out.weights.resize(frequencies.size());
  for (std::size_t c = 0; c < frequencies.size(); ++c) {
    if (frequencies[c] < 0.0) throw ArgumentError("class_weights: negative frequency");
    // A zero median (half or more classes absent) would zero every weight.
    double w = med > 0.0 ? med / (frequencies[c] + epsilon) : 1.0;
    if (cap) w = std::min(w, *cap);
    out.weights[c] = w;
  }
  return out;
}

}  // namespace fuzzyseg
