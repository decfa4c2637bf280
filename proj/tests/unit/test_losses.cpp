#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/gradcheck.hpp"
#include "fuzzyseg/losses.hpp"

using namespace fuzzyseg;
using namespace fuzzyseg::tk;

namespace {

PixelWeightMap uniform_weights(std::size_t n, std::size_t h, std::size_t w, double value) {
  return {Tensor({n, h, w}, value), Tensor({n, h, w}, 1.0), Tensor({n, h, w}, 0.0)};
}

Tensor one_pixel(std::vector<double> p) {
  const std::size_t c = p.size();
  return Tensor({1, c, 1, 1}, std::move(p));
}

double kl_value(const Tensor& pf, const Tensor& ps, const std::vector<double>& w, KlForm form) {
  Graph g;
  const FuzzyLabelMap f{pf, pf.dim(1)};
  const LossTerm t = unsupervised_kl(f, g.constant(ps), uniform_weights(1, 1, 1, 1.0), w, form);
  return t.scalar();
}

}  // namespace

TEST(SupervisedCe, HandValueAndIgnore) {
  Graph g;
  const Tensor p({1, 2, 1, 2}, {0.8, 0.5, 0.2, 0.5});
  LabelMap y(1, 1, 2);
  y.values = {0, 1};
  const LossTerm t = supervised_ce(g.constant(p), y);
  EXPECT_NEAR(t.scalar(), -(std::log(0.8) + std::log(0.5)) / 2.0, 1e-15);
  EXPECT_EQ(t.count, 2.0);
  y.values = {LabelMap::kIgnore, 1};
  EXPECT_NEAR(supervised_ce(g.constant(p), y).scalar(), -std::log(0.5), 1e-15);
  y.values = {LabelMap::kIgnore, LabelMap::kIgnore};
  const LossTerm empty = supervised_ce(g.constant(p), y);
  EXPECT_TRUE(empty.empty);
  EXPECT_EQ(empty.scalar(), 0.0);
  y.values = {0, 2};
  EXPECT_THROW(supervised_ce(g.constant(p), y), ValidationError);
}

TEST(UnsupervisedKl, ZeroAtTargetAndPositiveElsewhere) {
  const Tensor pf = one_pixel({0.625, 0.375, 0.0, 0.0});
  const std::vector<double> w{1.0, 3.0, 0.5, 20.0};
  EXPECT_NEAR(kl_value(pf, pf, w, KlForm::kGeneralized), 0.0, 1e-12);
  EXPECT_GT(kl_value(pf, one_pixel({0.5, 0.3, 0.1, 0.1}), w, KlForm::kGeneralized), 0.0);
}

TEST(UnsupervisedKl, FormsAgreeForEqualWeights) {
  const Tensor pf = one_pixel({0.6, 0.4, 0.0});
  const Tensor ps = one_pixel({0.2, 0.5, 0.3});
  const std::vector<double> w(3, 2.5);
  const double plain = kl_value(pf, ps, w, KlForm::kPlain);
  EXPECT_NEAR(plain, 2.5 * (0.6 * std::log(0.6 / 0.2) + 0.4 * std::log(0.4 / 0.5)), 1e-14);
  EXPECT_NEAR(kl_value(pf, ps, w, KlForm::kGeneralized), plain, 1e-14);
}

TEST(UnsupervisedKl, PlainFormCanGoNegative) {
  // Unequal class weights pull the plain form below zero.
  const double v = kl_value(one_pixel({0.5, 0.5}), one_pixel({1.0 / 11.0, 10.0 / 11.0}),
                            {1.0, 10.0}, KlForm::kPlain);
  EXPECT_LT(v, -2.0);
  EXPECT_GT(kl_value(one_pixel({0.5, 0.5}), one_pixel({1.0 / 11.0, 10.0 / 11.0}), {1.0, 10.0},
                     KlForm::kGeneralized),
            0.0);
}

TEST(UnsupervisedKl, WeightsAndMaskNormalization) {
  Graph g;
  const Tensor pf({1, 2, 1, 2}, {1.0, 1.0, 0.0, 0.0});
  const Tensor ps({1, 2, 1, 2}, {0.5, 0.25, 0.5, 0.75});
  PixelWeightMap m{Tensor({1, 1, 2}, {1.0, 0.5}), Tensor({1, 1, 2}, {1.0, 1.0}), Tensor({1, 1, 2})};
  const std::vector<double> w{1.0, 1.0};
  const FuzzyLabelMap f{pf, 1};
  const double both = unsupervised_kl(f, g.constant(ps), m, w).scalar();
  EXPECT_NEAR(both, (std::log(2.0) + 0.5 * std::log(4.0)) / 2.0, 1e-15);
  m.valid_mask[1] = 0.0;
  m.weight[1] = 0.0;
  const LossTerm one = unsupervised_kl(f, g.constant(ps), m, w);
  EXPECT_NEAR(one.scalar(), std::log(2.0), 1e-15);
  EXPECT_EQ(one.count, 1.0);
  m.valid_mask.fill(0.0);
  EXPECT_TRUE(unsupervised_kl(f, g.constant(ps), m, w).empty);
  EXPECT_THROW(unsupervised_kl(f, g.constant(ps), m, std::vector<double>{1.0}), ArgumentError);
}

TEST(UnsupervisedKl, GradientMatchesFiniteDifferences) {
  for (int s = 0; s < 20; ++s) {
    std::mt19937_64 rng(s);
    std::normal_distribution<double> nd;
    Tensor logits({1, 3, 2, 2});
    for (double& v : logits.values()) v = nd(rng);
    Tensor target(logits.shape());
    for (double& v : target.values()) v = std::abs(nd(rng)) + 0.1;
    const Tensor tnorm = softmax_values(target, 1);
    const FuzzyLabelMap f{tnorm, 3};
    PixelWeightMap m{Tensor({1, 2, 2}, 0.7), Tensor({1, 2, 2}, 1.0), Tensor({1, 2, 2})};
    const std::vector<double> w{1.0, 4.0, 0.3};
    for (KlForm form : {KlForm::kGeneralized, KlForm::kPlain}) {
      auto build = [&](Var x) { return unsupervised_kl(f, softmax(x, 1), m, w, form).value; };
      EXPECT_LE(finite_diff_grad_check(build, logits).max_rel_error, 1e-4) << "seed " << s;
    }
  }
}

TEST(Prototypes, MeanOfSelectedEmbeddings) {
  // D=2, 1x3 image: pixels 0,1 class 0, pixel 2 class 1.
  const Tensor emb({1, 2, 1, 3}, {1.0, 3.0, 5.0, 0.0, 2.0, 4.0});
  LabelMap a(1, 1, 3);
  a.values = {0, 0, 1};
  const Tensor w({1, 1, 3}, {0.9, 0.6, 0.4});
  const PrototypeSet p = compute_prototypes(emb, a, w, 0.5, 3);
  EXPECT_EQ(p.counts, (std::vector<std::size_t>{2, 0, 0}));
  EXPECT_EQ(p.num_present(), 1u);
  EXPECT_DOUBLE_EQ(p.prototypes.at(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(p.prototypes.at(0, 1), 1.0);
  EXPECT_EQ(p.selection, Tensor({1, 1, 3}, {1.0, 1.0, 0.0}));
  const PrototypeSet none = compute_prototypes(emb, a, Tensor({1, 1, 3}, 0.5), 0.5, 3);
  EXPECT_TRUE(none.empty());
  EXPECT_THROW(compute_prototypes(emb, a, w, 1.0, 3), ArgumentError);
}

TEST(Contrastive, ZeroWhenAlignedAndGradientOk) {
  Graph g;
  const Tensor emb({1, 2, 1, 2}, {1.0, 2.0, 1.0, 2.0});
  LabelMap a(1, 1, 2);
  a.values = {0, 0};
  const Tensor w({1, 1, 2}, 1.0);
  const PrototypeSet p = compute_prototypes(emb, a, w, 0.5, 2);
  EXPECT_NEAR(contrastive_loss(g.constant(emb), a, p).scalar(), 0.0, 1e-15);

  for (int s = 0; s < 20; ++s) {
    std::mt19937_64 rng(100 + s);
    std::normal_distribution<double> nd;
    Tensor e({2, 3, 2, 2});
    for (double& v : e.values()) v = nd(rng);
    LabelMap lab(2, 2, 2);
    for (int& v : lab.values) v = static_cast<int>(rng() % 2);
    Tensor wt({2, 2, 2});
    for (double& v : wt.values()) v = (rng() % 4) / 3.0;
    wt[0] = 1.0;
    const PrototypeSet ps = compute_prototypes(e, lab, wt, 0.5, 2);
    auto build = [&](Var x) { return contrastive_loss(x, lab, ps).value; };
    EXPECT_LE(finite_diff_grad_check(build, e).max_rel_error, 1e-4) << "seed " << s;
  }
}

TEST(TotalLoss, Combination) {
  EXPECT_DOUBLE_EQ(total_loss(1.0, 2.0, 3.0, 0.5, 0.1), 1.0 + 1.0 + 0.3);
  Graph g;
  Var s = g.constant(Tensor::scalar(1.0));
  Var u = g.constant(Tensor::scalar(2.0));
  EXPECT_DOUBLE_EQ(total_loss(g, s, u, Var{}, 0.5, 0.1).value().item(), 2.0);
}
