#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/gradcheck.hpp"
#include "fuzzyseg/graph.hpp"

using namespace fuzzyseg;
using namespace fuzzyseg::tk;

namespace {

constexpr int kSeeds = 20;

Tensor randn(std::mt19937_64& rng, Shape s, double scale = 1.0, double shift = 0.0) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor t(std::move(s));
  for (double& v : t.values()) v = shift + scale * nd(rng);
  return t;
}

// Reduces any output to a scalar with fixed random weights so every output
// element gets a distinct upstream gradient.
Var weighted_sum(Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, y.graph().constant(randn(rng, y.shape()))));
}

void expect_grad_ok(const std::function<Var(Var)>& op, const Tensor& x, std::uint64_t seed,
                    const char* what) {
  auto build = [&](Var in) { return weighted_sum(op(in), seed + 77); };
  const GradCheckResult r = finite_diff_grad_check(build, x, 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-4) << what << " seed " << seed << " worst index " << r.worst_index
                                   << " analytic " << r.analytic << " numeric " << r.numeric;
}

}  // namespace

TEST(Graph, ForwardValues) {
  Graph g;
  Var a = g.constant(Tensor({3}, {1, 2, 3}));
  Var b = g.constant(Tensor({3}, {4, 5, 6}));
  EXPECT_EQ(add(a, b).value(), Tensor({3}, {5, 7, 9}));
  EXPECT_EQ(sub(a, b).value(), Tensor({3}, {-3, -3, -3}));
  EXPECT_EQ(mul(a, b).value(), Tensor({3}, {4, 10, 18}));
  EXPECT_EQ(sum(a).value().item(), 6.0);
  EXPECT_DOUBLE_EQ(mean(a).value().item(), 2.0);
  EXPECT_DOUBLE_EQ(silu(g.constant(Tensor::scalar(0.0))).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(log(g.constant(Tensor::scalar(0.0)), 1e-12).value().item(), std::log(1e-12));
}

TEST(Graph, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(1);
  const Tensor x = randn(rng, {2, 5, 3, 4}, 4.0);
  const Tensor p = softmax_values(x, 1);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 12; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) s += p[(n * 5 + c) * 12 + i];
      EXPECT_NEAR(s, 1.0, 1e-14);
    }
  // Large logits stay finite.
  EXPECT_TRUE(softmax_values(Tensor({1, 2}, {1000.0, -1000.0}), 1).all_finite());
}

TEST(Graph, MatmulAndConvAgainstLoops) {
  std::mt19937_64 rng(2);
  Graph g;
  const Tensor a = randn(rng, {3, 4}), b = randn(rng, {4, 5});
  const Tensor c = matmul(g.constant(a), g.constant(b)).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), s, 1e-12);
    }
  const Tensor x = randn(rng, {2, 3, 7, 6}), w = randn(rng, {4, 3, 3, 3}), bias = randn(rng, {4});
  for (std::size_t stride : {1, 2}) {
    const Tensor y = conv2d(g.constant(x), g.constant(w), g.constant(bias), stride, 1).value();
    const std::size_t oh = (7 + 2 - 3) / stride + 1, ow = (6 + 2 - 3) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{2, 4, oh, ow}));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t o = 0; o < 4; ++o)
        for (std::size_t yy = 0; yy < oh; ++yy)
          for (std::size_t xx = 0; xx < ow; ++xx) {
            double s = bias[o];
            for (std::size_t ci = 0; ci < 3; ++ci)
              for (std::size_t ky = 0; ky < 3; ++ky)
                for (std::size_t kx = 0; kx < 3; ++kx) {
                  const long iy = static_cast<long>(yy * stride + ky) - 1;
                  const long ix = static_cast<long>(xx * stride + kx) - 1;
                  if (iy < 0 || ix < 0 || iy >= 7 || ix >= 6) continue;
                  s += w.at(o, ci, ky, kx) * x.at(n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                }
            EXPECT_NEAR(y.at(n, o, yy, xx), s, 1e-12);
          }
  }
}

TEST(Graph, BilinearIdentityAndConstants) {
  std::mt19937_64 rng(3);
  Graph g;
  const Tensor x = randn(rng, {1, 2, 5, 4});
  EXPECT_EQ(upsample_bilinear(g.constant(x), 5, 4).value(), x);
  const Tensor flat({1, 1, 3, 3}, 2.5);
  for (double v : upsample_bilinear(g.constant(flat), 7, 5).value().values()) EXPECT_NEAR(v, 2.5, 1e-15);
  // 2x upsample of [0, 1]: half-pixel centres give 0, .25, .75, 1.
  const Tensor row({1, 1, 1, 2}, {0.0, 1.0});
  const Tensor up = upsample_bilinear(g.constant(row), 1, 4).value();
  EXPECT_NEAR(up[0], 0.0, 1e-15);
  EXPECT_NEAR(up[1], 0.25, 1e-15);
  EXPECT_NEAR(up[2], 0.75, 1e-15);
  EXPECT_NEAR(up[3], 1.0, 1e-15);
}

TEST(Graph, SelectionOps) {
  Graph g;
  const Tensor x({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  LabelMap idx(1, 2, 2);
  idx.values = {0, 1, 1, 0};
  EXPECT_EQ(gather_classes(g.constant(x), idx).value(), Tensor({1, 2, 2}, {1, 6, 7, 4}));
  const Tensor mask({1, 2, 2}, {0, 1, 0, 1});
  EXPECT_EQ(select_pixels(g.constant(x), mask).value(), Tensor({2, 2}, {2, 6, 4, 8}));
  const Tensor m8({1, 2, 2, 2}, {1, 0, 0, 0, 0, 0, 0, 1});
  EXPECT_EQ(masked_select(g.constant(x), m8).value(), Tensor({2}, {1, 8}));
  const Tensor a({2, 2}, {1, 0, 0, 0}), b({2, 2}, {-3, 0, 1, 1});
  const Tensor cs = cosine_similarity(g.constant(a), g.constant(b)).value();
  EXPECT_NEAR(cs[0], -1.0, 1e-15);
  EXPECT_EQ(cs[1], 0.0);  // zero row -> cosine 0
}

TEST(Graph, ErrorsOnBadShapes) {
  Graph g;
  Var a = g.constant(Tensor({2}));
  Var b = g.constant(Tensor({3}));
  EXPECT_THROW(add(a, b), ArgumentError);
  EXPECT_THROW(matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3}))), ArgumentError);
  EXPECT_THROW(g.backward(a), ArgumentError);
  Graph other;
  EXPECT_THROW(other.backward(sum(a)), ArgumentError);
}

TEST(Graph, BackwardVisitsEachNodeOnce) {
  Graph g;
  Var x = g.parameter(Tensor({3}, {1, 2, 3}));
  Var y = mul(x, x);
  Var z = sum(add(y, y));
  g.backward(z);
  EXPECT_EQ(g.backward_visits(), g.size());
  EXPECT_EQ(g.grad(x), Tensor({3}, {4, 8, 12}));
  // Re-running backward resets instead of accumulating.
  g.backward(z);
  EXPECT_EQ(g.grad(x), Tensor({3}, {4, 8, 12}));
}

TEST(Graph, ConstantsReceiveNoGradient) {
  Graph g;
  Var c = g.constant(Tensor({2}, {1, 2}));
  Var p = g.parameter(Tensor({2}, {3, 4}));
  g.backward(sum(mul(c, p)));
  EXPECT_EQ(g.grad(c), Tensor({2}, 0.0));
  EXPECT_EQ(g.grad(p), Tensor({2}, {1, 2}));
}

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_DOUBLE_EQ(grad_rel_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(grad_rel_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(grad_rel_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(grad_rel_error(0.0, 1e-9), 1e-9 / kGradErrorFloor);
}

TEST(GradCheck, DetectsWrongGradient) {
  const Tensor x({3}, {0.5, -1.0, 2.0});
  auto f = [](const Tensor& t) { return t[0] * t[0] + t[1] + std::sin(t[2]); };
  const Tensor good({3}, {1.0, 1.0, std::cos(2.0)});
  EXPECT_LT(finite_diff_grad_check(f, good, x).max_rel_error, 1e-8);
  const Tensor bad({3}, {1.0, 1.1, std::cos(2.0)});
  const auto r = finite_diff_grad_check(f, bad, x);
  EXPECT_GT(r.max_rel_error, 0.05);
  EXPECT_EQ(r.worst_index, 1u);
}

// --- per-primitive finite-difference checks, 20 seeds each ---------------------

TEST(GraphGrad, Elementwise) {
  for (int s = 0; s < kSeeds; ++s) {
    std::mt19937_64 rng(100 + s);
    const Tensor x = randn(rng, {2, 3, 4}), other = randn(rng, {2, 3, 4});
    expect_grad_ok([&](Var v) { return add(v, v.graph().constant(other)); }, x, s, "add");
    expect_grad_ok([&](Var v) { return sub(v.graph().constant(other), v); }, x, s, "sub");
    expect_grad_ok([&](Var v) { return mul(v, v.graph().constant(other)); }, x, s, "mul");
    expect_grad_ok([&](Var v) { return mul(v, v); }, x, s, "mul self");
    expect_grad_ok([&](Var v) { return scale(v, -1.7); }, x, s, "scale");
    expect_grad_ok([&](Var v) { return add_scalar(v, 0.3); }, x, s, "add_scalar");
    expect_grad_ok([](Var v) { return silu(v); }, x, s, "silu");
    expect_grad_ok([](Var v) { return exp(v); }, x, s, "exp");
    const Tensor pos = randn(rng, {2, 3, 4}, 0.2, 1.5);
    expect_grad_ok([](Var v) { return log(v, 1e-12); }, pos, s, "log");
    const Tensor factors = randn(rng, {2, 3});
    const Tensor x4 = randn(rng, {2, 3, 2, 2});
    expect_grad_ok([&](Var v) { return scale_channels(v, factors); }, x4, s, "scale_channels");
  }
}

TEST(GraphGrad, SoftmaxAndReductions) {
  for (int s = 0; s < kSeeds; ++s) {
    std::mt19937_64 rng(200 + s);
    const Tensor x = randn(rng, {2, 4, 3, 2}, 2.0);
    for (std::size_t axis : {0u, 1u, 3u}) {
      expect_grad_ok([axis](Var v) { return softmax(v, axis); }, x, s, "softmax");
    }
    expect_grad_ok([](Var v) { return mean(v); }, x, s, "mean");
    expect_grad_ok([](Var v) { return scale(sum(mul(v, v)), 0.5); }, x, s, "sum");
  }
}

TEST(GraphGrad, MatmulBothSides) {
  for (int s = 0; s < kSeeds; ++s) {
    std::mt19937_64 rng(300 + s);
    const Tensor a = randn(rng, {3, 5}), b = randn(rng, {5, 2});
    expect_grad_ok([&](Var v) { return matmul(v, v.graph().constant(b)); }, a, s, "matmul lhs");
    expect_grad_ok([&](Var v) { return matmul(v.graph().constant(a), v); }, b, s, "matmul rhs");
  }
}

TEST(GraphGrad, Conv2dAllInputs) {
  for (int s = 0; s < kSeeds; ++s) {
    std::mt19937_64 rng(400 + s);
    const std::size_t stride = 1 + s % 2, pad = s % 3 == 0 ? 0 : 1, k = s % 4 == 0 ? 1 : 3;
    const Tensor x = randn(rng, {2, 3, 6, 5}), w = randn(rng, {4, 3, k, k}), b = randn(rng, {4});
    expect_grad_ok([&](Var v) {
      Graph& g = v.graph();
      return conv2d(v, g.constant(w), g.constant(b), stride, pad);
    }, x, s, "conv2d x");
    expect_grad_ok([&](Var v) {
      Graph& g = v.graph();
      return conv2d(g.constant(x), v, g.constant(b), stride, pad);
    }, w, s, "conv2d w");
    expect_grad_ok([&](Var v) {
      Graph& g = v.graph();
      return conv2d(g.constant(x), g.constant(w), v, stride, pad);
    }, b, s, "conv2d bias");
  }
}

TEST(GraphGrad, Resampling) {
  for (int s = 0; s < kSeeds; ++s) {
    std::mt19937_64 rng(500 + s);
    const Tensor x = randn(rng, {2, 2, 3, 4});
    expect_grad_ok([](Var v) { return upsample_nearest(v, 2); }, x, s, "upsample_nearest");
    const std::size_t oh = 2 + s % 7, ow = 3 + s % 5;
    expect_grad_ok([&](Var v) { return upsample_bilinear(v, oh, ow); }, x, s, "upsample_bilinear");
  }
}

TEST(GraphGrad, SelectionAndCosine) {
  for (int s = 0; s < kSeeds; ++s) {
    std::mt19937_64 rng(600 + s);
    const Tensor x = randn(rng, {2, 3, 2, 3});
    LabelMap idx(2, 2, 3);
    for (int& v : idx.values) v = static_cast<int>(rng() % 3);
    expect_grad_ok([&](Var v) { return gather_classes(v, idx); }, x, s, "gather_classes");
    Tensor mask({2, 2, 3});
    for (double& m : mask.values()) m = rng() % 2 ? 1.0 : 0.0;
    mask[0] = 1.0;
    expect_grad_ok([&](Var v) { return select_pixels(v, mask); }, x, s, "select_pixels");
    Tensor emask(x.shape());
    for (double& m : emask.values()) m = rng() % 2 ? 1.0 : 0.0;
    emask[0] = 1.0;
    expect_grad_ok([&](Var v) { return masked_select(v, emask); }, x, s, "masked_select");
    const Tensor a = randn(rng, {4, 5}), b = randn(rng, {4, 5});
    expect_grad_ok([&](Var v) { return cosine_similarity(v, v.graph().constant(b)); }, a, s, "cosine lhs");
    expect_grad_ok([&](Var v) { return cosine_similarity(v.graph().constant(a), v); }, b, s, "cosine rhs");
  }
}

TEST(GraphGrad, ComposedChain) {
  for (int s = 0; s < kSeeds; ++s) {
    std::mt19937_64 rng(700 + s);
    const Tensor x = randn(rng, {1, 2, 4, 4});
    const Tensor w = randn(rng, {3, 2, 3, 3}, 0.5);
    expect_grad_ok([&](Var v) {
      Graph& g = v.graph();
      Var h = silu(conv2d(v, g.constant(w), Var{}, 2, 1));
      h = upsample_bilinear(h, 4, 4);
      return log(softmax(h, 1), 1e-12);
    }, x, s, "chain");
  }
}
