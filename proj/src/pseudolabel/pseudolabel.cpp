#include "fuzzyseg/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/topk.hpp"

namespace fuzzyseg {
namespace {

struct Layout {
  std::size_t n, c, plane;
};

Layout layout_of(const Tensor& probs) {
  if (probs.rank() != 4) {
    throw ArgumentError("expected a [N,C,H,W] probability map, got " +
                        shape_to_string(probs.shape()));
  }
  return {probs.dim(0), probs.dim(1), probs.dim(2) * probs.dim(3)};
}

}  // namespace

void validate_distribution(const Tensor& probs, double tol) {
  const Layout l = layout_of(probs);
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t p = 0; p < l.plane; ++p) {
      double s = 0.0;
      for (std::size_t c = 0; c < l.c; ++c) {
        const double v = probs[(n * l.c + c) * l.plane + p];
        if (!(v >= 0.0)) throw ValidationError("probability map has a negative or NaN entry");
        s += v;
      }
      if (std::abs(s - 1.0) > tol) {
        throw ValidationError("pixel distribution sums to " + std::to_string(s));
      }
    }
  }
}

FuzzyLabelMap fuzzy_labels(const Tensor& teacher_probs, std::size_t k) {
  const Layout l = layout_of(teacher_probs);
  if (k == 0 || k > l.c) {
    throw ArgumentError("fuzzy_labels: K=" + std::to_string(k) + " outside [1, C]");
  }
  validate_distribution(teacher_probs);
  FuzzyLabelMap out{Tensor(teacher_probs.shape(), 0.0), k};
  std::vector<double> column(l.c);
  std::vector<std::size_t> top(k);
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t p = 0; p < l.plane; ++p) {
      for (std::size_t c = 0; c < l.c; ++c) column[c] = teacher_probs[(n * l.c + c) * l.plane + p];
      topk_indices_into(column, top);
      double mass = 0.0;
      for (auto c : top) mass += column[c];
      for (auto c : top) out.probs[(n * l.c + c) * l.plane + p] = column[c] / mass;
    }
  }
  return out;
}

Tensor normalized_entropy(const Tensor& teacher_probs) {
  const Layout l = layout_of(teacher_probs);
  if (l.c < 2) throw ArgumentError("normalized_entropy needs at least two classes");
  const double inv_log_c = 1.0 / std::log(static_cast<double>(l.c));
  Tensor h({l.n, teacher_probs.dim(2), teacher_probs.dim(3)}, 0.0);
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t p = 0; p < l.plane; ++p) {
      double s = 0.0;
      for (std::size_t c = 0; c < l.c; ++c) {
        const double v = teacher_probs[(n * l.c + c) * l.plane + p];
        if (v > 0.0) s -= v * std::log(v);
      }
      h[n * l.plane + p] = std::clamp(s * inv_log_c, 0.0, 1.0);
    }
  }
  return h;
}

Tensor pixel_weights(const Tensor& entropy, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ArgumentError("entropy threshold must lie in (0,1]");
  Tensor w(entropy.shape(), 0.0);
  for (std::size_t i = 0; i < entropy.numel(); ++i) {
    const double e = entropy[i];
    if (!(e >= 0.0 && e <= 1.0)) {
      throw ValidationError("entropy value " + std::to_string(e) + " outside [0,1]");
    }
    w[i] = e <= tau ? 1.0 - e : 0.0;
  }
  return w;
}

PixelWeightMap make_pixel_weight_map(const Tensor& teacher_probs, double tau, const Tensor& valid) {
  PixelWeightMap m;
  m.entropy = normalized_entropy(teacher_probs);
  m.weight = pixel_weights(m.entropy, tau);
  if (valid.empty()) {
    m.valid_mask = Tensor(m.entropy.shape(), 1.0);
  } else {
    require_same_shape(valid, m.entropy, "make_pixel_weight_map");
    m.valid_mask = valid;
    for (std::size_t i = 0; i < valid.numel(); ++i)
      if (valid[i] == 0.0) m.weight[i] = 0.0;
  }
  return m;
}

LabelMap fuzzy_argmax(const FuzzyLabelMap& fuzzy) {
  const Layout l = layout_of(fuzzy.probs);
  LabelMap out(l.n, fuzzy.probs.dim(2), fuzzy.probs.dim(3));
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t p = 0; p < l.plane; ++p) {
      std::size_t best = 0;
      double bv = fuzzy.probs[(n * l.c) * l.plane + p];
      for (std::size_t c = 1; c < l.c; ++c) {
        const double v = fuzzy.probs[(n * l.c + c) * l.plane + p];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      out.values[n * l.plane + p] = static_cast<int>(best);
    }
  }
  return out;
}

}  // namespace fuzzyseg
