#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/pseudolabel.hpp"

using namespace fuzzyseg;

namespace {

// One-pixel [1,C,1,1] map.
Tensor pixel(std::vector<double> p) {
  const std::size_t c = p.size();
  return Tensor({1, c, 1, 1}, std::move(p));
}

Tensor random_probs(std::mt19937_64& rng, std::size_t n, std::size_t c, std::size_t h,
                    std::size_t w) {
  std::gamma_distribution<double> gd(0.5, 1.0);
  Tensor t({n, c, h, w});
  const std::size_t hw = h * w;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < hw; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) s += t[(b * c + k) * hw + i] = gd(rng) + 1e-9;
      for (std::size_t k = 0; k < c; ++k) t[(b * c + k) * hw + i] /= s;
    }
  return t;
}

}  // namespace

TEST(FuzzyLabels, HandExample) {
  const FuzzyLabelMap f = fuzzy_labels(pixel({0.5, 0.3, 0.15, 0.05}), 2);
  EXPECT_EQ(f.support_size, 2u);
  EXPECT_DOUBLE_EQ(f.probs[0], 0.625);
  EXPECT_DOUBLE_EQ(f.probs[1], 0.375);
  EXPECT_EQ(f.probs[2], 0.0);
  EXPECT_EQ(f.probs[3], 0.0);
}

TEST(FuzzyLabels, TiesPreferLowerIndex) {
  const FuzzyLabelMap f = fuzzy_labels(pixel({0.2, 0.4, 0.2, 0.2}), 2);
  EXPECT_DOUBLE_EQ(f.probs[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(f.probs[1], 2.0 / 3.0);
  EXPECT_EQ(f.probs[2], 0.0);
  EXPECT_EQ(fuzzy_argmax(fuzzy_labels(pixel({0.25, 0.25, 0.25, 0.25}), 4)).values[0], 0);
}

TEST(FuzzyLabels, KOneIsHardArgmaxAndKCIsIdentity) {
  std::mt19937_64 rng(5);
  const Tensor p = random_probs(rng, 2, 5, 3, 3);
  const FuzzyLabelMap hard = fuzzy_labels(p, 1);
  const FuzzyLabelMap full = fuzzy_labels(p, 5);
  for (std::size_t i = 0; i < p.numel(); ++i) {
    EXPECT_TRUE(hard.probs[i] == 0.0 || hard.probs[i] == 1.0);
    EXPECT_NEAR(full.probs[i], p[i], 1e-15);
  }
}

TEST(FuzzyLabels, SupportAndNormalization) {
  std::mt19937_64 rng(6);
  for (std::size_t c = 2; c <= 7; ++c)
    for (std::size_t k = 1; k <= c; ++k) {
      const Tensor p = random_probs(rng, 2, c, 2, 3);
      const FuzzyLabelMap f = fuzzy_labels(p, k);
      validate_distribution(f.probs, 1e-12);
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < 6; ++i) {
          std::size_t nz = 0;
          for (std::size_t j = 0; j < c; ++j) nz += f.probs[(b * c + j) * 6 + i] > 0.0;
          EXPECT_EQ(nz, k);
        }
    }
}

TEST(FuzzyLabels, RejectsBadInput) {
  EXPECT_THROW(fuzzy_labels(pixel({0.5, 0.5}), 0), ArgumentError);
  EXPECT_THROW(fuzzy_labels(pixel({0.5, 0.5}), 3), ArgumentError);
  EXPECT_THROW(fuzzy_labels(Tensor({2, 2}, 0.5), 1), ArgumentError);
  EXPECT_THROW(fuzzy_labels(pixel({0.6, 0.6}), 1), ValidationError);
  EXPECT_THROW(fuzzy_labels(pixel({1.2, -0.2}), 1), ValidationError);
  EXPECT_THROW(fuzzy_labels(pixel({std::nan(""), 1.0}), 1), ValidationError);
}

TEST(Entropy, EdgeCases) {
  for (std::size_t c = 2; c <= 8; ++c) {
    std::vector<double> onehot(c, 0.0);
    onehot[c - 1] = 1.0;
    EXPECT_EQ(normalized_entropy(pixel(onehot))[0], 0.0);
    EXPECT_NEAR(normalized_entropy(pixel(std::vector<double>(c, 1.0 / c)))[0], 1.0, 1e-12);
  }
  const double h = normalized_entropy(pixel({0.5, 0.5, 0.0, 0.0}))[0];
  EXPECT_NEAR(h, 0.5, 1e-15);
  EXPECT_THROW(normalized_entropy(pixel({1.0})), ArgumentError);
}

TEST(Entropy, RangeOnRandomDraws) {
  std::mt19937_64 rng(7);
  const Tensor p = random_probs(rng, 4, 6, 16, 16);
  for (double v : normalized_entropy(p).values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(PixelWeights, ThresholdRule) {
  const Tensor e({1, 1, 5}, {0.0, 0.3, 0.7, 0.7000001, 1.0});
  const Tensor w = pixel_weights(e, 0.7);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_DOUBLE_EQ(w[1], 0.7);
  EXPECT_NEAR(w[2], 0.3, 1e-15);  // H == tau is kept
  EXPECT_EQ(w[3], 0.0);
  EXPECT_EQ(w[4], 0.0);
  const Tensor plain = pixel_weights(e, 1.0);
  EXPECT_EQ(plain[4], 0.0);
  EXPECT_NEAR(plain[3], 1.0 - 0.7000001, 1e-15);
  EXPECT_THROW(pixel_weights(Tensor({1, 1, 1}, 1.5)), ValidationError);
  EXPECT_THROW(pixel_weights(Tensor({1, 1, 1}, -0.1)), ValidationError);
  EXPECT_THROW(pixel_weights(e, 0.0), ArgumentError);
}

TEST(PixelWeights, ValidMaskZeroesWeights) {
  const Tensor p({1, 2, 1, 2}, {1.0, 0.9, 0.0, 0.1});
  const PixelWeightMap m = make_pixel_weight_map(p, 0.7, Tensor({1, 1, 2}, {0.0, 1.0}));
  EXPECT_EQ(m.weight[0], 0.0);
  EXPECT_GT(m.weight[1], 0.0);
  EXPECT_EQ(m.valid_mask[0], 0.0);
  EXPECT_EQ(m.entropy[0], 0.0);
  const PixelWeightMap all = make_pixel_weight_map(p, 0.7);
  EXPECT_EQ(all.weight[0], 1.0);
  EXPECT_EQ(all.valid_mask[0], 1.0);
}
