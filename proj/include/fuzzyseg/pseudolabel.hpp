#pragma once

#include <cstddef>

#include "fuzzyseg/tensor.hpp"

// Teacher probability maps -> soft training targets and reliability weights.
// All maps are batched: probabilities [N,C,H,W], per-pixel maps [N,H,W].
// Inputs are plain tensors, i.e. detached from any gradient graph.

namespace fuzzyseg {

// Per pixel, the teacher distribution restricted to its top-K classes and
// renormalized by the top-K mass; every other class is exactly zero.
struct FuzzyLabelMap {
  Tensor probs;
  std::size_t support_size = 0;

  std::size_t num_classes() const { return probs.dim(1); }
};

struct PixelWeightMap {
  Tensor weight;      // W in [0,1]
  Tensor valid_mask;  // M in {0,1}
  Tensor entropy;     // normalized entropy in [0,1]
};

// Throws ValidationError if some pixel's distribution has a negative entry or
// sums to something further than `tol` from 1.
void validate_distribution(const Tensor& probs, double tol = 1e-6);

FuzzyLabelMap fuzzy_labels(const Tensor& teacher_probs, std::size_t k);

// -(1/log C) * sum_c p log p, with 0 log 0 = 0, clamped into [0,1].
Tensor normalized_entropy(const Tensor& teacher_probs);

// weight = 1 - H where H <= tau, 0 elsewhere. tau = 1 gives the plain 1 - H
// rule. Throws ValidationError for entropies outside [0,1].
Tensor pixel_weights(const Tensor& entropy, double tau = 0.7);

// Entropy, weights and validity in one pass. `valid` may be empty (all valid);
// weights are zeroed where the mask is 0.
PixelWeightMap make_pixel_weight_map(const Tensor& teacher_probs, double tau,
                                     const Tensor& valid = {});

// Per-pixel argmax of the fuzzy map, lowest class index among ties.
LabelMap fuzzy_argmax(const FuzzyLabelMap& fuzzy);

}  // namespace fuzzyseg
