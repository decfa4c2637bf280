#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fuzzyseg/pseudolabel.hpp"
#include "fuzzyseg/tensor.hpp"

namespace fuzzyseg {

struct ClassWeightVector {
  std::vector<double> weights;      // w_c
  std::vector<double> frequencies;  // F_c
  double epsilon = 1e-6;
};

// Valid-pixel counts per class of `assignments` ([N,H,W]); `valid_mask` may be
// empty (every pixel counts).
std::vector<double> class_frequencies(const LabelMap& assignments, const Tensor& valid_mask,
                                      std::size_t num_classes);

// Counts over the fuzzy argmax.
std::vector<double> class_frequencies(const FuzzyLabelMap& fuzzy, const Tensor& valid_mask);

// Median over all entries; mean of the two middle values for even sizes.
double median_of(std::span<const double> values);

// w_c = median(F) / (F_c + eps). With `cap`, weights are clipped to at most cap.
// If median(F) is 0 every weight is 1 (no rebalancing for that batch).
ClassWeightVector class_weights(std::span<const double> frequencies, double epsilon = 1e-6,
                                std::optional<double> cap = std::nullopt);

}  // namespace fuzzyseg
