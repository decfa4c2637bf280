#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fuzzyseg/graph.hpp"
#include "fuzzyseg/pseudolabel.hpp"
#include "fuzzyseg/tensor.hpp"

namespace fuzzyseg {

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kNormFloor = 1e-12;

// A scalar loss node plus the "nothing to average over" flag. Empty losses
// are a constant zero on the same graph.
struct LossTerm {
  tk::Var value;
  bool empty = false;
  double count = 0.0;  // pixels (or selected embeddings) averaged over

  double scalar() const { return value.value().item(); }
};

struct LossBreakdown {
  double supervised = 0.0;
  double unsupervised = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
  double n_valid = 0.0;
  double lambda_u = 0.5;
  double lambda_c = 0.1;
};

// Mean over non-ignored pixels of -log p[label]; probs [N,C,H,W], labels
// [N,H,W] with LabelMap::kIgnore for excluded pixels.
LossTerm supervised_ce(tk::Var student_probs, const LabelMap& labels);

// How the class weight enters each class term of the unsupervised loss.
//   kPlain:       w_c pf (log pf - log pS)
//   kGeneralized: w_c (pf (log pf - log pS) - pf + pS)
// Both agree when all w_c are equal (the extra terms sum to zero per pixel).
// Only the generalized terms are individually nonnegative, so only that form
// keeps the loss >= 0 with its minimum at pS = pf for unequal class weights.
enum class KlForm { kGeneralized, kPlain };

// (1/N_valid) sum_hw M W sum_c [class term], pf log pf taken as 0 where
// pf = 0 and pS floored at kProbFloor. N_valid counts pixels with M = 1.
LossTerm unsupervised_kl(const FuzzyLabelMap& fuzzy, tk::Var student_probs,
                         const PixelWeightMap& weights, std::span<const double> class_weights,
                         KlForm form = KlForm::kGeneralized);

struct PrototypeSet {
  Tensor prototypes;                // [C,D]
  std::vector<std::size_t> counts;  // |P_c|
  std::vector<bool> present;
  Tensor selection;                 // [N,H,W], 1 where the pixel is in some P_c

  std::size_t num_present() const;
  bool empty() const { return num_present() == 0; }
};

// P_c = pixels with weight > threshold (and valid, if a mask is given) whose
// assignment is c; f_c is their mean embedding. embeddings: [N,D,H,W].
PrototypeSet compute_prototypes(const Tensor& embeddings, const LabelMap& assignments,
                                const Tensor& weights, double select_threshold,
                                std::size_t num_classes, const Tensor& valid = {});

// (1/C_present) sum_c (1/|P_c|) sum_{i in P_c} (1 - cos(f_i, f_c)).
// Prototypes are constants: gradients reach the embeddings only.
LossTerm contrastive_loss(tk::Var embeddings, const LabelMap& assignments,
                          const PrototypeSet& prototypes);

// L_s + lambda_u L_u + lambda_c L_c. Invalid vars count as zero.
tk::Var total_loss(tk::Graph& g, tk::Var supervised, tk::Var unsupervised, tk::Var contrastive,
                   double lambda_u, double lambda_c);
double total_loss(double supervised, double unsupervised, double contrastive, double lambda_u,
                  double lambda_c);

}  // namespace fuzzyseg
