#include "fuzzyseg/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/gradcheck.hpp"
#include "fuzzyseg/losses.hpp"
#include "fuzzyseg/metrics.hpp"
#include "fuzzyseg/params.hpp"
#include "fuzzyseg/pseudolabel.hpp"
#include "fuzzyseg/rebalance.hpp"

namespace fuzzyseg {
namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Random [1,C,H,W] distribution map. With `ties`, logits are drawn from a
// small integer set so equal probabilities are common.
Tensor random_distribution(std::mt19937_64& rng, std::size_t c, std::size_t h, std::size_t w, bool ties) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> spread(0.1, 6.0);
  const double s = spread(rng);
  Tensor logits({1, c, h, w});
  for (double& v : logits.values()) v = ties ? std::round(nd(rng) * 1.5) : nd(rng) * s;
  return tk::softmax_values(logits, 1);
}

// Top-K classes of one pixel: descending probability, ascending index among ties.
std::vector<std::size_t> oracle_topk(const std::vector<double>& p, std::size_t k) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  idx.resize(k);
  return idx;
}

std::vector<double> pixel(const Tensor& t, std::size_t n, std::size_t plane_index) {
  const std::size_t c = t.dim(1), plane = t.dim(2) * t.dim(3);
  std::vector<double> out(c);
  for (std::size_t k = 0; k < c; ++k) out[k] = t[(n * c + k) * plane + plane_index];
  return out;
}

CheckResult make(int criterion, const char* name, double budget) {
  CheckResult r;
  r.criterion = criterion;
  r.name = name;
  r.budget_seconds = budget;
  return r;
}

void finish(CheckResult& r, Clock::time_point t0, bool ok, std::string detail) {
  r.seconds = since(t0);
  const bool in_budget = r.budget_seconds <= 0.0 || r.seconds <= r.budget_seconds;
  r.passed = ok && in_budget;
  if (ok && !in_budget) detail += "; over the runtime budget";
  r.detail = std::move(detail);
}

}  // namespace

std::string format_check(const CheckResult& r) {
  std::ostringstream os;
  os << (r.skipped ? "[SKIP]" : r.passed ? "[PASS]" : "[FAIL]") << " criterion " << r.criterion << ": "
     << r.name;
  if (!r.skipped) {
    os << " (" << fmt("%.1f", r.seconds) << " s";
    if (r.budget_seconds > 0.0) os << " of " << fmt("%.0f", r.budget_seconds);
    os << ")";
  }
  if (!r.detail.empty()) os << " - " << r.detail;
  return os.str();
}

// 1 -----------------------------------------------------------------------------
CheckResult check_fuzzy_labels(std::uint64_t seed) {
  CheckResult r = make(1, "fuzzy-label suite", 10.0);
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  bool ok = true;
  std::string why;
  double worst_mass = 0.0, worst_value = 0.0, worst_idem = 0.0;
  std::size_t maps = 0, pixels = 0;
  for (; maps < 1000; ++maps) {
    const std::size_t c = 3 + maps % 6;                       // 3..8
    const std::size_t k = 1 + (maps / 6) % c;                 // 1..C
    const bool ties = maps % 5 == 0;
    const Tensor p = random_distribution(rng, c, 4, 4, ties);
    const FuzzyLabelMap f = fuzzy_labels(p, k);
    const FuzzyLabelMap f2 = fuzzy_labels(f.probs, k);
    for (std::size_t i = 0; i < 16; ++i, ++pixels) {
      const auto pv = pixel(p, 0, i), fv = pixel(f.probs, 0, i), f2v = pixel(f2.probs, 0, i);
      const auto top = oracle_topk(pv, k);
      double topmass = 0.0;
      for (auto t : top) topmass += pv[t];
      double mass = 0.0;
      for (std::size_t cls = 0; cls < c; ++cls) {
        const bool in_top = std::find(top.begin(), top.end(), cls) != top.end();
        if (fv[cls] > 0.0 && !in_top) {
          ok = false;
          why = "support outside top-K";
        }
        const double expect = in_top ? pv[cls] / topmass : 0.0;
        worst_value = std::max(worst_value, std::abs(fv[cls] - expect));
        worst_idem = std::max(worst_idem, std::abs(f2v[cls] - fv[cls]));
        if (fv[cls] > 0.0) mass += fv[cls];
      }
      worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
    }
  }
  if (worst_mass > 1e-9) {
    ok = false;
    why = "mass deviates from 1";
  }
  if (worst_idem > 1e-12) {
    ok = false;
    why = "not idempotent";
  }
  if (worst_value > 1e-12) {
    ok = false;
    why = "values differ from the renormalized top-K oracle";
  }
  const Tensor hand({1, 3, 1, 1}, {0.5, 0.3, 0.2});
  const FuzzyLabelMap hf = fuzzy_labels(hand, 2);
  const double hand_err = std::max({std::abs(hf.probs[0] - 0.625), std::abs(hf.probs[1] - 0.375),
                                    std::abs(hf.probs[2] - 0.0)});
  if (hand_err > 1e-12) {
    ok = false;
    why = "hand case [0.5,0.3,0.2],K=2";
  }
  finish(r, t0, ok,
         std::to_string(maps) + " maps / " + std::to_string(pixels) + " pixels, max |mass-1| " +
             fmt("%.1e", worst_mass) + ", max idempotence gap " + fmt("%.1e", worst_idem) +
             ", hand case err " + fmt("%.1e", hand_err) + (why.empty() ? "" : "; " + why));
  return r;
}

// 2 -----------------------------------------------------------------------------
CheckResult check_entropy_weights(std::uint64_t seed) {
  CheckResult r = make(2, "entropy/weight suite", 10.0);
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  bool ok = true;
  std::string why;
  double edge_err = 0.0;
  for (std::size_t c = 2; c <= 8; ++c) {
    const Tensor uni({1, c, 1, 1}, 1.0 / static_cast<double>(c));
    edge_err = std::max(edge_err, std::abs(normalized_entropy(uni)[0] - 1.0));
    for (std::size_t hot = 0; hot < c; ++hot) {
      Tensor one({1, c, 1, 1}, 0.0);
      one[hot] = 1.0;
      edge_err = std::max(edge_err, std::abs(normalized_entropy(one)[0]));
    }
  }
  if (edge_err > 1e-12) {
    ok = false;
    why = "uniform/one-hot entropy";
  }
  std::size_t draws = 0;
  double lo = 1.0, hi = 0.0;
  for (std::size_t batch = 0; batch < 10; ++batch) {
    const std::size_t c = 2 + batch % 7;
    const Tensor p = random_distribution(rng, c, 100, 100, batch % 3 == 0);
    const Tensor h = normalized_entropy(p);
    for (double v : h.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++draws;
      if (!(v >= 0.0 && v <= 1.0)) {
        ok = false;
        why = "entropy outside [0,1]";
      }
    }
  }
  // Weight rule: exact equality with the composite definition.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor e({20000});
  for (std::size_t i = 0; i < e.numel(); ++i) e[i] = i < 4 ? std::vector<double>{0.0, 1.0, 0.7, 0.5}[i] : u(rng);
  std::size_t mismatches = 0;
  for (double tau : {0.7, 1.0, 0.3, 0.5, 0.99}) {
    const Tensor w = pixel_weights(e, tau);
    for (std::size_t i = 0; i < e.numel(); ++i) {
      const double expect = e[i] <= tau ? 1.0 - e[i] : 0.0;
      if (w[i] != expect) ++mismatches;
    }
  }
  const Tensor ex({4}, {0.0, 1.0, 0.8, 0.6});
  const Tensor wx = pixel_weights(ex, 0.7);
  if (wx[0] != 1.0 || wx[1] != 0.0 || wx[2] != 0.0 || std::abs(wx[3] - 0.4) > 1e-15) ++mismatches;
  if (mismatches) {
    ok = false;
    why = std::to_string(mismatches) + " weight mismatches";
  }
  finish(r, t0, ok,
         "edge-case err " + fmt("%.1e", edge_err) + ", " + std::to_string(draws) + " random H in [" +
             fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "], weight mismatches " + std::to_string(mismatches) +
             (why.empty() ? "" : "; " + why));
  return r;
}

// 3 -----------------------------------------------------------------------------
CheckResult check_rebalance(std::uint64_t seed) {
  CheckResult r = make(3, "rebalancing oracle", 5.0);
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  std::size_t mismatches = 0, monotone_violations = 0, zero_median = 0;
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 1 + trial % 12;
    std::vector<double> f(c);
    std::uniform_int_distribution<int> count(0, 5000);
    for (double& v : f) v = (rng() % 5 == 0) ? 0.0 : static_cast<double>(count(rng));
    const double eps = trial % 2 ? 1e-6 : 1e-3;
    // Oracle: sort, median over all entries, divide.
    std::vector<double> sorted = f;
    std::sort(sorted.begin(), sorted.end());
    const double med = c % 2 ? sorted[c / 2] : (sorted[c / 2 - 1] + sorted[c / 2]) / 2.0;
    if (med == 0.0) ++zero_median;
    for (const bool capped : {false, true}) {
      const auto cw = capped ? class_weights(f, eps, 20.0) : class_weights(f, eps);
      for (std::size_t k = 0; k < c; ++k) {
        double expect = med > 0.0 ? med / (f[k] + eps) : 1.0;
        if (capped) expect = std::min(expect, 20.0);
        if (cw.weights[k] != expect) ++mismatches;
      }
      for (std::size_t a = 0; a < c; ++a)
        for (std::size_t b = 0; b < c; ++b)
          if (f[a] < f[b] && cw.weights[a] < cw.weights[b]) ++monotone_violations;
    }
  }
  // Hand examples.
  const std::vector<double> f1{100, 10, 1};
  const auto w1 = class_weights(f1, 1e-6).weights;
  bool hand_ok = std::abs(w1[0] / 0.1 - 1) < 1e-5 && std::abs(w1[1] - 1) < 1e-5 && std::abs(w1[2] / 10 - 1) < 1e-5;
  const std::vector<double> f2{0, 50};
  const auto w2 = class_weights(f2, 1e-6).weights;
  hand_ok = hand_ok && std::abs(w2[0] / (25.0 / 1e-6) - 1) < 1e-12 && std::abs(w2[1] - 0.5) < 1e-6;
  const bool ok = mismatches == 0 && monotone_violations == 0 && hand_ok;
  finish(r, t0, ok,
         "1000 vectors (capped and uncapped), mismatches " + std::to_string(mismatches) +
             ", monotonicity violations " + std::to_string(monotone_violations) + ", zero-median vectors " +
             std::to_string(zero_median) + (hand_ok ? "" : "; hand examples failed"));
  return r;
}

// 4 -----------------------------------------------------------------------------
namespace {

struct GradInstance {
  SegNetConfig net;
  ParameterStore params;
  Tensor labeled_images;
  LabelMap labels;
  Tensor unlabeled_images;
  Tensor feature_mask;
  FuzzyLabelMap fuzzy;
  PixelWeightMap weights;
  std::vector<double> class_w;
  LabelMap assign;
  PrototypeSet prototypes;
};

enum class Part { kSupervised, kUnsupervised, kContrastive, kTotal };

struct PartVars {
  tk::Var ls, lu, lc, total;
};

PartVars build_losses(tk::Graph& g, const GradInstance& gi, const ParamVars& vars) {
  PartVars pv;
  const ForwardOutput lo = forward(vars, g.constant(gi.labeled_images), gi.net);
  pv.ls = supervised_ce(tk::softmax(lo.logits, 1), gi.labels).value;
  const ForwardOutput uo = forward(vars, g.constant(gi.unlabeled_images), gi.net, gi.feature_mask);
  pv.lu = unsupervised_kl(gi.fuzzy, tk::softmax(uo.logits, 1), gi.weights, gi.class_w).value;
  const std::size_t h = gi.unlabeled_images.dim(2), w = gi.unlabeled_images.dim(3);
  const tk::Var emb = project_embeddings(uo.features, vars, gi.net, h, w);
  pv.lc = contrastive_loss(emb, gi.assign, gi.prototypes).value;
  pv.total = total_loss(g, pv.ls, pv.lu, pv.lc, 0.5, 0.1);
  return pv;
}

tk::Var pick(const PartVars& pv, Part p) {
  switch (p) {
    case Part::kSupervised: return pv.ls;
    case Part::kUnsupervised: return pv.lu;
    case Part::kContrastive: return pv.lc;
    case Part::kTotal: return pv.total;
  }
  return pv.total;
}

GradInstance make_grad_instance(std::uint64_t seed, std::size_t classes) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GradInstance gi;
  gi.net.in_channels = 3;
  gi.net.base_width = 4;
  gi.net.depth = 2;
  gi.net.num_classes = classes;
  gi.net.embed_dim = 4;
  gi.params = init_params(gi.net, seed);
  // Random classifier and biases so every layer carries gradient.
  for (const auto& [name, t] : gi.params.entries()) {
    Tensor& m = gi.params.mutable_at(name);
    const bool bias = name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0;
    if (name.rfind("cls.", 0) == 0) {
      for (double& v : m.values()) v = 0.5 * nd(rng);
    } else if (bias) {
      for (double& v : m.values()) v = 0.1 * nd(rng);
    }
  }
  const std::size_t n = 2, h = 8, w = 8;
  gi.labeled_images = Tensor({n, 3, h, w});
  gi.unlabeled_images = Tensor({n, 3, h, w});
  for (double& v : gi.labeled_images.values()) v = u(rng);
  for (double& v : gi.unlabeled_images.values()) v = u(rng);
  gi.labels = LabelMap(n, h, w);
  for (int& v : gi.labels.values) v = u(rng) < 0.1 ? LabelMap::kIgnore : static_cast<int>(rng() % classes);

  Tensor logits({n, classes, h, w});
  for (double& v : logits.values()) v = 3.0 * nd(rng);
  const Tensor teacher = tk::softmax_values(logits, 1);
  gi.fuzzy = fuzzy_labels(teacher, 1 + rng() % classes);
  Tensor valid({n, h, w});
  for (double& v : valid.values()) v = u(rng) < 0.85 ? 1.0 : 0.0;
  gi.weights = make_pixel_weight_map(teacher, 0.9, valid);
  for (std::size_t k = 0; k < classes; ++k) gi.class_w.push_back(0.5 + 2.5 * u(rng));
  gi.assign = fuzzy_argmax(gi.fuzzy);

  const std::size_t f = gi.net.feature_channels();
  gi.feature_mask = Tensor({n, f});
  for (double& v : gi.feature_mask.values()) v = u(rng) < 0.5 ? 0.0 : 2.0;

  // Prototypes from the embeddings at the base point, then held fixed.
  tk::Graph g;
  const ParamVars vars = bind_params(g, gi.params, false);
  const ForwardOutput uo = forward(vars, g.constant(gi.unlabeled_images), gi.net, gi.feature_mask);
  const tk::Var emb = project_embeddings(uo.features, vars, gi.net, h, w);
  double threshold = 0.5;
  gi.prototypes = compute_prototypes(emb.value(), gi.assign, gi.weights.weight, threshold, classes, valid);
  if (gi.prototypes.empty()) {
    gi.prototypes = compute_prototypes(emb.value(), gi.assign, gi.weights.weight, 0.0, classes, valid);
  }
  return gi;
}

Tensor flatten(const ParameterStore& s) {
  std::vector<double> v;
  for (const auto& [name, t] : s.entries()) v.insert(v.end(), t.values().begin(), t.values().end());
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

ParameterStore unflatten(const Tensor& x, const ParameterStore& like) {
  ParameterStore out;
  std::size_t off = 0;
  for (const auto& [name, t] : like.entries()) {
    Tensor copy(t.shape());
    std::copy(x.data() + off, x.data() + off + t.numel(), copy.data());
    off += t.numel();
    out.set(name, std::move(copy));
  }
  return out;
}

}  // namespace

CheckResult check_gradients(std::size_t seeds) {
  CheckResult r = make(4, "gradient gate", 300.0);
  const auto t0 = Clock::now();
  const std::pair<Part, const char*> parts[] = {{Part::kSupervised, "L_s"},
                                                {Part::kUnsupervised, "L_u"},
                                                {Part::kContrastive, "L_c"},
                                                {Part::kTotal, "L_total"}};
  double worst[4] = {0, 0, 0, 0};
  double worst_abs = 0.0;
  std::size_t coords = 0, tiny = 0;
  std::string where;
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::size_t classes = 2 + s % 3;
    const GradInstance gi = make_grad_instance(1000 + s, classes);
    for (std::size_t pi = 0; pi < 4; ++pi) {
      const Part part = parts[pi].first;
      tk::Graph g;
      const ParamVars vars = bind_params(g, gi.params, true);
      const tk::Var loss = pick(build_losses(g, gi, vars), part);
      g.backward(loss);
      const Tensor analytic = flatten(collect_grads(g, vars));
      auto f = [&](const Tensor& x) {
        tk::Graph h;
        const ParamVars pv = bind_params(h, unflatten(x, gi.params), false);
        return pick(build_losses(h, gi, pv), part).value().item();
      };
      const tk::GradCheckResult res = tk::finite_diff_grad_check(f, analytic, flatten(gi.params), 1e-5);
      coords += res.coordinates;
      tiny += res.below_floor;
      worst_abs = std::max(worst_abs, res.max_abs_error);
      if (res.max_rel_error > worst[pi]) {
        worst[pi] = res.max_rel_error;
        if (res.max_rel_error > 1e-4) {
          where = std::string(parts[pi].second) + " seed " + std::to_string(s) + " coord " +
                  std::to_string(res.worst_index) + " analytic " + fmt("%.6e", res.analytic) + " numeric " +
                  fmt("%.6e", res.numeric);
        }
      }
    }
  }
  bool ok = true;
  std::string detail = std::to_string(seeds) + " seeds, " + std::to_string(coords) + " coordinates; max rel err";
  for (std::size_t pi = 0; pi < 4; ++pi) {
    detail += std::string(" ") + parts[pi].second + " " + fmt("%.1e", worst[pi]);
    ok = ok && worst[pi] <= 1e-4;
  }
  detail += "; max abs err " + fmt("%.1e", worst_abs) + ", " + std::to_string(tiny) + " coordinates below the " +
            fmt("%.0e", tk::kGradErrorFloor) + " floor";
  if (!where.empty()) detail += "; worst: " + where;
  finish(r, t0, ok, detail);
  return r;
}

// 5 -----------------------------------------------------------------------------
namespace {

double kl_value(const FuzzyLabelMap& f, const Tensor& student, const PixelWeightMap& w,
                const std::vector<double>& cw) {
  tk::Graph g;
  return unsupervised_kl(f, g.constant(student), w, cw).scalar();
}

}  // namespace

CheckResult check_kl_properties(std::uint64_t seed) {
  CheckResult r = make(5, "KL properties", 0.0);
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double min_loss = 1e300, max_at_target = 0.0, max_reduction_gap = 0.0, worst_descent = 0.0;
  std::size_t trials = 0;
  for (std::size_t t = 0; t < 1000; ++t, ++trials) {
    const std::size_t c = 2 + t % 7, h = 3, w = 3;
    const Tensor teacher = random_distribution(rng, c, h, w, t % 4 == 0);
    const FuzzyLabelMap f = fuzzy_labels(teacher, 1 + rng() % c);
    Tensor valid({1, h, w});
    for (double& v : valid.values()) v = u(rng) < 0.8 ? 1.0 : 0.0;
    PixelWeightMap pw = make_pixel_weight_map(teacher, u(rng) < 0.5 ? 0.7 : 1.0, valid);
    if (t % 2) {
      for (double& v : pw.weight.values()) v = u(rng);
    }
    std::vector<double> cw(c);
    for (double& v : cw) v = t % 3 == 0 ? 1.0 : 0.05 + 20.0 * u(rng);
    const Tensor student = random_distribution(rng, c, h, w, false);
    const double l = kl_value(f, student, pw, cw);
    min_loss = std::min(min_loss, l);
    const double at_target = kl_value(f, f.probs, pw, cw);
    max_at_target = std::max(max_at_target, std::abs(at_target));
    // Argmin: moving the student away from the target never lowers the loss.
    if (t < 100) {
      for (int step = 0; step < 5; ++step) {
        const double eta = 0.01 + 0.99 * u(rng);
        const Tensor q = random_distribution(rng, c, h, w, false);
        Tensor moved(f.probs.shape());
        for (std::size_t i = 0; i < moved.numel(); ++i) moved[i] = (1.0 - eta) * f.probs[i] + eta * q[i];
        worst_descent = std::max(worst_descent, at_target - kl_value(f, moved, pw, cw));
      }
    }
    // Reduction: K = C, unit weights, all valid -> plain mean KL(teacher || student).
    const FuzzyLabelMap full = fuzzy_labels(teacher, c);
    PixelWeightMap ones{Tensor({1, h, w}, 1.0), Tensor({1, h, w}, 1.0), normalized_entropy(teacher)};
    const double reduced = kl_value(full, student, ones, std::vector<double>(c, 1.0));
    double direct = 0.0;
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t k = 0; k < c; ++k) {
        const double tp = teacher[k * h * w + p];
        if (tp > 0.0) direct += tp * std::log(tp / std::max(student[k * h * w + p], kProbFloor));
      }
    direct /= static_cast<double>(h * w);
    max_reduction_gap = std::max(max_reduction_gap, std::abs(reduced - direct));
  }
  const bool ok = min_loss >= -1e-9 && max_at_target <= 1e-9 && max_reduction_gap <= 1e-9 && worst_descent <= 1e-12;
  finish(r, t0, ok,
         std::to_string(trials) + " random instances (class weights up to 20): min L_u " + fmt("%.2e", min_loss) +
             ", max |L_u| at target " + fmt("%.1e", max_at_target) + ", max gap to plain KL " +
             fmt("%.1e", max_reduction_gap) + ", max decrease away from target " + fmt("%.1e", worst_descent));
  return r;
}

// 6 -----------------------------------------------------------------------------
CheckResult check_ema(std::uint64_t seed) {
  CheckResult r = make(6, "EMA contraction", 0.0);
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  ParameterStore student;
  student.set("a", Tensor({64}));
  student.set("b", Tensor({3, 5, 7}));
  for (const auto& [name, t] : student.entries())
    for (double& v : student.mutable_at(name).values()) v = nd(rng);
  ParameterStore teacher = student.as_role(StoreRole::kTeacher);
  for (const auto& [name, t] : teacher.entries())
    for (double& v : teacher.mutable_at(name).values()) v += 3.0 * nd(rng);
  const double alpha = 0.99;
  auto gaps = [&] {
    std::vector<double> g;
    for (const auto& [name, t] : teacher.entries())
      for (std::size_t i = 0; i < t.numel(); ++i) g.push_back(t[i] - student.at(name)[i]);
    return g;
  };
  const std::vector<double> g0 = gaps();
  std::vector<double> prev = g0;
  double step_dev = 0.0;
  const std::uint64_t student_sum = student.checksum();
  for (int step = 1; step <= 100; ++step) {
    ema_update(teacher, student, alpha);
    const auto cur = gaps();
    for (std::size_t i = 0; i < cur.size(); ++i) step_dev = std::max(step_dev, std::abs(cur[i] - alpha * prev[i]));
    prev = cur;
  }
  double total_dev = 0.0;
  const double a100 = std::pow(alpha, 100);
  for (std::size_t i = 0; i < prev.size(); ++i) total_dev = std::max(total_dev, std::abs(prev[i] - a100 * g0[i]));
  const bool ok = step_dev <= 1e-12 && total_dev <= 1e-12 && student.checksum() == student_sum;
  finish(r, t0, ok,
         "100 steps, alpha 0.99: max |gap' - alpha gap| " + fmt("%.1e", step_dev) +
             ", max |gap_100 - alpha^100 gap_0| " + fmt("%.1e", total_dev));
  return r;
}

// 7 -----------------------------------------------------------------------------
CheckResult check_miou(std::uint64_t seed) {
  CheckResult r = make(7, "mIoU oracle", 0.0);
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  std::size_t mismatches = 0, absent_cases = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + rng() % 5, h = 1 + rng() % 8, w = 1 + rng() % 8;
    LabelMap truth(1, h, w), pred(1, h, w);
    for (std::size_t i = 0; i < truth.numel(); ++i) {
      truth.values[i] = rng() % 7 == 0 ? LabelMap::kIgnore : static_cast<int>(rng() % c);
      pred.values[i] = static_cast<int>(rng() % c);
    }
    ConfusionMatrix cm(c);
    update_confusion(cm, pred, truth);
    // Oracle straight from the pixels.
    std::vector<double> iou(c, 0.0);
    std::vector<bool> present(c, false);
    std::size_t correct = 0, counted = 0;
    for (std::size_t k = 0; k < c; ++k) {
      std::uint64_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < truth.numel(); ++i) {
        const int t = truth.values[i], p = pred.values[i];
        if (t == LabelMap::kIgnore) continue;
        const bool is_t = t == static_cast<int>(k), is_p = p == static_cast<int>(k);
        tp += is_t && is_p;
        fp += !is_t && is_p;
        fn += is_t && !is_p;
      }
      if (tp + fp + fn > 0) {
        present[k] = true;
        iou[k] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
      }
    }
    for (std::size_t i = 0; i < truth.numel(); ++i) {
      if (truth.values[i] == LabelMap::kIgnore) continue;
      ++counted;
      correct += truth.values[i] == pred.values[i];
    }
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) {
        std::uint64_t n = 0;
        for (std::size_t i = 0; i < truth.numel(); ++i)
          n += truth.values[i] == static_cast<int>(a) && pred.values[i] == static_cast<int>(b);
        if (cm.at(a, b) != n) ++mismatches;
      }
    const ClassIoU got = iou_per_class(cm);
    for (std::size_t k = 0; k < c; ++k)
      if (got.present[k] != present[k] || got.iou[k] != iou[k]) ++mismatches;
    double s = 0.0;
    std::size_t np = 0;
    for (std::size_t k = 0; k < c; ++k)
      if (present[k]) {
        s += iou[k];
        ++np;
      }
    if (np < c) ++absent_cases;
    if (np == 0) {
      bool threw = false;
      try {
        (void)miou(got);
      } catch (const EvaluationError&) {
        threw = true;
      }
      if (!threw) ++mismatches;
      continue;
    }
    if (miou(got) != s / static_cast<double>(np)) ++mismatches;
    if (counted > 0 && pixel_accuracy(cm) != static_cast<double>(correct) / static_cast<double>(counted)) {
      ++mismatches;
    }
  }
  finish(r, t0, mismatches == 0,
         "100 random maps, mismatches " + std::to_string(mismatches) + ", maps with an absent class " +
             std::to_string(absent_cases));
  return r;
}

// 8-10 ----------------------------------------------------------------------------
TrainConfig headline_config() {
  TrainConfig c;
  c.seeds = {0, 1, 2};
  // A from-scratch network at this size does not leave the all-background
  // solution within the run at the library default of 0.001.
  c.lr = 0.1;
  return c;
}

HeadlineRuns run_headline(const TrainConfig& config, const std::filesystem::path& out_dir) {
  std::vector<AblationVariant> arms;
  for (const char* name : {"full", "baseline"}) arms.push_back(*find_variant(name));
  HeadlineRuns h;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  h.report = run_ablation(config, arms, config.seeds, [&](const AblationRun& run) {
    if (!out_dir.empty()) {
      write_file((out_dir / (run.variant + "_seed" + std::to_string(run.seed) + "_loss.csv")).string(),
                 run.loss_csv);
    }
  });
  for (const auto& run : h.report.runs)
    if (run.variant == "full") {
      h.full_loss_csv = run.loss_csv;
      break;
    }
  if (!out_dir.empty()) {
    write_file((out_dir / "headline.csv").string(), ablation_csv(h.report, config.num_classes));
  }
  return h;
}

CheckResult check_headline(const HeadlineRuns& runs, std::size_t rare_class, double seconds) {
  CheckResult r = make(8, "headline desk-scale experiment", 1800.0);
  const double full = 100.0 * runs.report.mean_miou("full");
  const double base = 100.0 * runs.report.mean_miou("baseline");
  const double full_rare = 100.0 * runs.report.mean_class_iou("full", rare_class);
  const double base_rare = 100.0 * runs.report.mean_class_iou("baseline", rare_class);
  const bool ok = full - base >= 2.0 && full_rare - base_rare >= 3.0;
  r.seconds = seconds;
  r.passed = ok && seconds <= r.budget_seconds;
  std::size_t seeds = 0;
  for (const auto& run : runs.report.runs) seeds += run.variant == "full";
  r.detail = std::to_string(seeds) + " seeds: mIoU full " + fmt("%.2f", full) + " vs baseline " + fmt("%.2f", base) +
             " (" + fmt("%+.2f", full - base) + "), rare-class IoU " + fmt("%.2f", full_rare) + " vs " +
             fmt("%.2f", base_rare) + " (" + fmt("%+.2f", full_rare - base_rare) + ")";
  if (ok && seconds > r.budget_seconds) r.detail += "; over the runtime budget";
  return r;
}

ConvergenceSummary summarize_convergence(const LossSeries& s, std::size_t window) {
  ConvergenceSummary c;
  c.window = window;
  c.length = s.total.size();
  if (c.length < 300) return c;
  const auto st = smooth(s.total, window);
  const auto ss = smooth(s.supervised, window);
  const std::size_t last = c.length - 1;
  c.total_at_200 = st[200];
  c.total_final = st[last];
  c.supervised_initial_slope = (ss[200] - ss[100]) / 100.0;
  c.supervised_final_slope = (ss[last] - ss[last - 100]) / 100.0;
  c.descent_ok = c.total_final <= 0.5 * c.total_at_200;
  c.plateau_ok = std::abs(c.supervised_final_slope) < 0.1 * std::abs(c.supervised_initial_slope);
  return c;
}

std::string format_convergence(const ConvergenceSummary& c) {
  std::ostringstream os;
  if (c.length < 300) {
    os << "series too short for the convergence summary (" << c.length << " < 300 iterations)\n";
    return os.str();
  }
  os << "iterations " << c.length << ", smoothing window " << c.window << "\n"
     << "smoothed L_total: iter 200 " << fmt("%.4f", c.total_at_200) << ", final " << fmt("%.4f", c.total_final)
     << " (ratio " << fmt("%.3f", c.total_final / c.total_at_200) << ", need <= 0.5) "
     << (c.descent_ok ? "ok" : "NOT MET") << "\n"
     << "smoothed L_s slope: initial " << fmt("%.3e", c.supervised_initial_slope) << "/iter, final "
     << fmt("%.3e", c.supervised_final_slope) << "/iter (ratio "
     << fmt("%.3f", std::abs(c.supervised_final_slope / c.supervised_initial_slope)) << ", need < 0.1) "
     << (c.plateau_ok ? "ok" : "NOT MET") << "\n";
  return os.str();
}

CheckResult check_convergence(const std::string& loss_csv) {
  CheckResult r = make(9, "convergence shape", 0.0);
  const auto t0 = Clock::now();
  const ConvergenceSummary c = summarize_convergence(parse_loss_csv(loss_csv), 100);
  std::string detail;
  std::istringstream lines(format_convergence(c));
  for (std::string line; std::getline(lines, line);) detail += (detail.empty() ? "" : "; ") + line;
  finish(r, t0, c.length >= 300 && c.descent_ok && c.plateau_ok, detail);
  return r;
}

CheckResult check_ablation_harness(const TrainConfig& config) {
  CheckResult r = make(10, "ablation harness", 0.0);
  const auto t0 = Clock::now();
  const std::vector<AblationVariant> variants = standard_variants();
  const std::vector<std::uint64_t> seed{config.seeds.front()};
  const AblationReport first = run_ablation(config, variants, seed);
  const AblationReport second = run_ablation(config, variants, seed);
  std::size_t nondeterministic = 0;
  for (std::size_t i = 0; i < first.runs.size(); ++i) {
    if (first.runs[i].loss_csv != second.runs[i].loss_csv || first.runs[i].eval.miou != second.runs[i].eval.miou) {
      ++nondeterministic;
    }
  }
  // Dedicated supervised-only run: unsupervised terms switched off by weight.
  TrainConfig sup = config;
  sup.seed = seed.front();
  sup.use_unlabeled = false;
  const TrainResult dedicated = run_training(sup, make_benchmark(sup));
  const AblationRun* base = nullptr;
  for (const auto& run : first.runs)
    if (run.variant == "baseline") base = &run;
  const bool baseline_match = base && base->loss_csv == loss_csv(dedicated.records, sup.verbose) &&
                              base->eval.miou == dedicated.final_eval.miou;
  // Lambda-zero run: every unsupervised branch executes but contributes nothing.
  TrainConfig zero = config;
  zero.seed = seed.front();
  zero.lambda_u = 0.0;
  zero.lambda_c = 0.0;
  const TrainResult zr = run_training(zero, make_benchmark(zero));
  bool same_supervised = zr.records.size() == dedicated.records.size();
  for (std::size_t i = 0; same_supervised && i < zr.records.size(); ++i) {
    same_supervised = zr.records[i].loss.supervised == dedicated.records[i].loss.supervised &&
                      zr.records[i].loss.total == dedicated.records[i].loss.total;
  }
  const bool ok = first.variants.size() == 6 && nondeterministic == 0 && baseline_match && same_supervised;
  finish(r, t0, ok,
         std::to_string(first.variants.size()) + " variants x 2 repeats at " +
             std::to_string(dedicated.iterations) + " iterations: non-deterministic runs " +
             std::to_string(nondeterministic) + ", baseline row " +
             (baseline_match ? "bit-identical to" : "DIFFERS from") + " the dedicated run, lambda=0 trajectory " +
             (same_supervised ? "identical" : "differs"));
  return r;
}

std::vector<CheckResult> run_checks(const VerifyOptions& options,
                                    const std::function<void(const CheckResult&)>& on_result) {
  auto wanted = [&](int c) {
    return options.only.empty() || std::find(options.only.begin(), options.only.end(), c) != options.only.end();
  };
  std::vector<CheckResult> out;
  auto emit = [&](CheckResult r) {
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  };
  auto guarded = [&](int criterion, const char* name, const std::function<CheckResult()>& fn) {
    if (!wanted(criterion)) return;
    try {
      emit(fn());
    } catch (const std::exception& e) {
      CheckResult r = make(criterion, name, 0.0);
      r.detail = std::string("threw: ") + e.what();
      emit(r);
    }
  };
  guarded(1, "fuzzy-label suite", [] { return check_fuzzy_labels(); });
  guarded(2, "entropy/weight suite", [] { return check_entropy_weights(); });
  guarded(3, "rebalancing oracle", [] { return check_rebalance(); });
  guarded(4, "gradient gate", [] { return check_gradients(); });
  guarded(5, "KL properties", [] { return check_kl_properties(); });
  guarded(6, "EMA contraction", [] { return check_ema(); });
  guarded(7, "mIoU oracle", [] { return check_miou(); });

  const bool long_wanted = wanted(8) || wanted(9) || wanted(10);
  if (!options.include_long) {
    for (int c : {8, 9, 10}) {
      if (!wanted(c)) continue;
      CheckResult r = make(c, c == 8 ? "headline desk-scale experiment" : c == 9 ? "convergence shape" : "ablation harness", 0.0);
      r.skipped = true;
      r.detail = "training experiment; run with --full";
      emit(r);
    }
    return out;
  }
  if (!long_wanted) return out;
  const TrainConfig cfg = headline_config();
  if (wanted(8) || wanted(9)) {
    std::optional<HeadlineRuns> runs;
    const auto t0 = Clock::now();
    try {
      runs = run_headline(cfg, options.out_dir.empty() ? std::filesystem::path{} : options.out_dir / "headline");
    } catch (const std::exception& e) {
      for (int c : {8, 9}) {
        if (!wanted(c)) continue;
        CheckResult r = make(c, c == 8 ? "headline desk-scale experiment" : "convergence shape", 0.0);
        r.detail = std::string("threw: ") + e.what();
        emit(r);
      }
    }
    if (runs) {
      const double secs = since(t0);
      if (wanted(8)) emit(check_headline(*runs, cfg.num_classes - 1, secs));
      if (wanted(9)) emit(check_convergence(runs->full_loss_csv));
    }
  }
  if (wanted(10)) {
    TrainConfig short_cfg = cfg;
    short_cfg.iterations = 40;
    guarded(10, "ablation harness", [&] { return check_ablation_harness(short_cfg); });
  }
  return out;
}

}  // namespace fuzzyseg
