#include "fuzzyseg/losses.hpp"

#include <cmath>
#include <string>

#include "fuzzyseg/errors.hpp"

namespace fuzzyseg {

namespace {

LossTerm zero_term(tk::Graph& g) { return {g.constant(Tensor::scalar(0.0)), true, 0.0}; }

}  // namespace

LossTerm supervised_ce(tk::Var student_probs, const LabelMap& labels) {
  const Shape& s = student_probs.shape();
  if (s.size() != 4 || labels.shape != Shape{s[0], s[2], s[3]}) {
    throw ArgumentError("supervised_ce: labels must be [N,H,W] for probs " + shape_to_string(s));
  }
  const std::size_t c = s[1];
  LabelMap index = labels;
  Tensor mask(labels.shape, 0.0);
  double n = 0.0;
  for (std::size_t i = 0; i < labels.numel(); ++i) {
    const int k = labels.values[i];
    if (k == LabelMap::kIgnore) {
      index.values[i] = 0;
      continue;
    }
    if (k < 0 || static_cast<std::size_t>(k) >= c) {
      throw ValidationError("supervised_ce: label " + std::to_string(k) + " out of range");
    }
    mask[i] = 1.0;
    n += 1.0;
  }
  tk::Graph& g = student_probs.graph();
  if (n == 0.0) return zero_term(g);
  tk::Var logp = tk::gather_classes(tk::log(student_probs, kProbFloor), index);
  tk::Var picked = tk::mul(logp, g.constant(std::move(mask)));
  return {tk::scale(tk::sum(picked), -1.0 / n), false, n};
}

LossTerm unsupervised_kl(const FuzzyLabelMap& fuzzy, tk::Var student_probs,
                         const PixelWeightMap& weights, std::span<const double> class_weights,
                         KlForm form) {
  const Tensor& pf = fuzzy.probs;
  require_same_shape(pf, student_probs.value(), "unsupervised_kl");
  const std::size_t n = pf.dim(0), c = pf.dim(1), plane = pf.dim(2) * pf.dim(3);
  const Shape pixel_shape{n, pf.dim(2), pf.dim(3)};
  if (weights.weight.shape() != pixel_shape || weights.valid_mask.shape() != pixel_shape) {
    throw ArgumentError("unsupervised_kl: weight maps must be [N,H,W]");
  }
  if (class_weights.size() != c) {
    throw ArgumentError("unsupervised_kl: need one class weight per class");
  }

  double n_valid = 0.0;
  for (double m : weights.valid_mask.values()) n_valid += m != 0.0 ? 1.0 : 0.0;
  tk::Graph& g = student_probs.graph();
  if (n_valid == 0.0) return zero_term(g);

  // coef = M W w_c pf / N_valid; loss = sum coef log pf - sum coef log pS,
  // plus sum lin (pS - pf) with lin = M W w_c / N_valid in the generalized form.
  const bool generalized = form == KlForm::kGeneralized;
  Tensor coef(pf.shape(), 0.0);
  Tensor lin = generalized ? Tensor(pf.shape(), 0.0) : Tensor();
  double constant = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      const double mw = weights.valid_mask[b * plane + p] != 0.0 ? weights.weight[b * plane + p] : 0.0;
      if (mw == 0.0) continue;
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t i = (b * c + k) * plane + p;
        const double l = mw * class_weights[k] / n_valid;
        if (generalized) {
          lin[i] = l;
          constant -= l * pf[i];
        }
        if (pf[i] <= 0.0) continue;
        coef[i] = l * pf[i];
        constant += coef[i] * std::log(pf[i]);
      }
    }
  }
  tk::Var loss = tk::scale(tk::sum(tk::mul(g.constant(std::move(coef)), tk::log(student_probs, kProbFloor))), -1.0);
  if (generalized) loss = tk::add(loss, tk::sum(tk::mul(g.constant(std::move(lin)), student_probs)));
  return {tk::add_scalar(loss, constant), false, n_valid};
}

std::size_t PrototypeSet::num_present() const {
  std::size_t k = 0;
  for (bool p : present) k += p ? 1 : 0;
  return k;
}

PrototypeSet compute_prototypes(const Tensor& embeddings, const LabelMap& assignments,
                                const Tensor& weights, double select_threshold,
                                std::size_t num_classes, const Tensor& valid) {
  if (embeddings.rank() != 4) throw ArgumentError("compute_prototypes: embeddings must be [N,D,H,W]");
  const std::size_t n = embeddings.dim(0), d = embeddings.dim(1);
  const std::size_t plane = embeddings.dim(2) * embeddings.dim(3);
  const Shape pixel_shape{n, embeddings.dim(2), embeddings.dim(3)};
  if (assignments.shape != pixel_shape || weights.shape() != pixel_shape ||
      (!valid.empty() && valid.shape() != pixel_shape)) {
    throw ArgumentError("compute_prototypes: maps not aligned with embeddings");
  }
  if (!(select_threshold >= 0.0 && select_threshold < 1.0)) {
    throw ArgumentError("compute_prototypes: threshold must lie in [0,1)");
  }
  PrototypeSet ps;
  ps.prototypes = Tensor({num_classes, d}, 0.0);
  ps.counts.assign(num_classes, 0);
  ps.present.assign(num_classes, false);
  ps.selection = Tensor(pixel_shape, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t i = b * plane + p;
      if (!(weights[i] > select_threshold)) continue;
      if (!valid.empty() && valid[i] == 0.0) continue;
      const int k = assignments.values[i];
      if (k < 0 || static_cast<std::size_t>(k) >= num_classes) continue;
      const auto cls = static_cast<std::size_t>(k);
      ps.selection[i] = 1.0;
      ++ps.counts[cls];
      for (std::size_t j = 0; j < d; ++j) ps.prototypes[cls * d + j] += embeddings[(b * d + j) * plane + p];
    }
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (ps.counts[k] == 0) continue;
    ps.present[k] = true;
    const double inv = 1.0 / static_cast<double>(ps.counts[k]);
    for (std::size_t j = 0; j < d; ++j) ps.prototypes[k * d + j] *= inv;
  }
  return ps;
}

LossTerm contrastive_loss(tk::Var embeddings, const LabelMap& assignments,
                          const PrototypeSet& prototypes) {
  tk::Graph& g = embeddings.graph();
  const Shape& s = embeddings.shape();
  if (s.size() != 4 || prototypes.selection.shape() != Shape{s[0], s[2], s[3]} ||
      assignments.shape != prototypes.selection.shape()) {
    throw ArgumentError("contrastive_loss: selection not aligned with embeddings");
  }
  const std::size_t d = s[1];
  if (prototypes.prototypes.dim(1) != d) throw ArgumentError("contrastive_loss: prototype width");
  const std::size_t present = prototypes.num_present();
  if (present == 0) return zero_term(g);

  // Rows in select_pixels order (n,h,w): the prototype of each pixel's class
  // and its averaging coefficient 1 / (C_present |P_c|).
  std::vector<std::size_t> cls;
  for (std::size_t i = 0; i < prototypes.selection.numel(); ++i)
    if (prototypes.selection[i] != 0.0) cls.push_back(static_cast<std::size_t>(assignments.values[i]));
  Tensor targets({cls.size(), d});
  Tensor coef({cls.size()});
  double coef_sum = 0.0;
  for (std::size_t r = 0; r < cls.size(); ++r) {
    const std::size_t k = cls[r];
    if (!prototypes.present[k]) throw ArgumentError("contrastive_loss: selection uses an absent class");
    for (std::size_t j = 0; j < d; ++j) targets[r * d + j] = prototypes.prototypes[k * d + j];
    coef[r] = 1.0 / (static_cast<double>(present) * static_cast<double>(prototypes.counts[k]));
    coef_sum += coef[r];
  }
  tk::Var rows = tk::select_pixels(embeddings, prototypes.selection);
  tk::Var cosv = tk::cosine_similarity(rows, g.constant(std::move(targets)), kNormFloor);
  tk::Var weighted = tk::sum(tk::mul(cosv, g.constant(std::move(coef))));
  return {tk::add_scalar(tk::scale(weighted, -1.0), coef_sum), false,
          static_cast<double>(cls.size())};
}

tk::Var total_loss(tk::Graph& g, tk::Var supervised, tk::Var unsupervised, tk::Var contrastive,
                   double lambda_u, double lambda_c) {
  tk::Var acc = supervised.valid() ? supervised : g.constant(Tensor::scalar(0.0));
  if (unsupervised.valid() && lambda_u != 0.0) acc = tk::add(acc, tk::scale(unsupervised, lambda_u));
  if (contrastive.valid() && lambda_c != 0.0) acc = tk::add(acc, tk::scale(contrastive, lambda_c));
  return acc;
}

double total_loss(double supervised, double unsupervised, double contrastive, double lambda_u,
                  double lambda_c) {
  return supervised + lambda_u * unsupervised + lambda_c * contrastive;
}

}  // namespace fuzzyseg
