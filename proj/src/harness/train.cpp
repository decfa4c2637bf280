#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "fuzzyseg/augment.hpp"
#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/harness.hpp"
#include "fuzzyseg/pseudolabel.hpp"
#include "fuzzyseg/rebalance.hpp"
#include "fuzzyseg/seed.hpp"
#include "fuzzyseg/tensor_io.hpp"

namespace fuzzyseg {
namespace {

// Independent random streams; every draw is keyed by (seed, stream, iter, ...)
// so toggling one part of the step never shifts the randomness of another.
enum Stream : std::uint64_t {
  kInit = 1,
  kLabeledBatch,
  kUnlabeledBatch,
  kWeakLabeled,
  kWeakUnlabeled,
  kStrongA,
  kStrongB,
  kChannelMask,
  kEvalScenes,
};

std::vector<std::size_t> draw_batch(const std::vector<std::size_t>& pool, std::size_t b,
                                    std::uint64_t seed) {
  std::vector<std::size_t> order = pool;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> out;
  out.reserve(b);
  for (std::size_t i = 0; i < b; ++i) out.push_back(order[i % order.size()]);
  return out;
}

Tensor stack(const std::vector<Tensor>& items) {
  Shape s{items.size()};
  for (auto d : items.front().shape()) s.push_back(d);
  Tensor out(s);
  const std::size_t n = items.front().numel();
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i].values().begin(), items[i].values().end(), out.data() + i * n);
  }
  return out;
}

LabelMap stack(const std::vector<LabelMap>& items) {
  LabelMap out(items.size(), items.front().shape[1], items.front().shape[2]);
  const std::size_t n = items.front().numel();
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i].values.begin(), items[i].values.end(), out.values.begin() + static_cast<long>(i * n));
  }
  return out;
}

// Slice `i` of a batched tensor as a tensor of the remaining axes.
Tensor slice(const Tensor& t, std::size_t i) {
  Shape s(t.shape().begin() + 1, t.shape().end());
  const std::size_t n = shape_numel(s);
  return Tensor(s, std::vector<double>(t.data() + i * n, t.data() + (i + 1) * n));
}

Tensor softmax_probs(const ParameterStore& params, const SegNetConfig& net, const Tensor& images) {
  tk::Graph g;
  const ParamVars vars = bind_params(g, params, false);
  const ForwardOutput out = forward(vars, g.constant(images), net);
  return tk::softmax_values(out.logits.value(), 1);
}

// Targets for one strong view: everything the teacher produced on the weak
// view, carried through the strong view's geometric warp.
struct StrongTargets {
  Tensor images;           // [B,3,h,w]
  FuzzyLabelMap fuzzy;     // [B,C,h,w]
  PixelWeightMap loss_w;   // W (or 1) and validity used by the KL term
  Tensor select_w;         // [B,h,w] uncertainty weight used for prototype selection
  LabelMap assign;         // fuzzy argmax
};

StrongTargets make_strong_view(const std::vector<AugmentedView>& weak, const FuzzyLabelMap& fuzzy,
                               const PixelWeightMap& pw, const TrainConfig& cfg, std::uint64_t seed,
                               std::uint64_t stream, std::size_t iter) {
  AugmentationSpec spec = AugmentationSpec::strong_default();
  spec.crop_h = spec.crop_w = cfg.strong_crop;
  const std::size_t c = cfg.num_classes;
  std::vector<Tensor> imgs, probs, weights, valids, entropies;
  for (std::size_t j = 0; j < weak.size(); ++j) {
    const AugmentedView sv = apply_augmentation(weak[j].image, nullptr, spec, mix_seed(seed, {stream, iter, j}));
    imgs.push_back(sv.image);
    probs.push_back(warp_map(slice(fuzzy.probs, j), sv.warp, 1.0 / static_cast<double>(c)));
    const Tensor w = slice(pw.weight, j), e = slice(pw.entropy, j), m = slice(pw.valid_mask, j);
    const std::size_t h = w.dim(0), wd = w.dim(1);
    Tensor wv = warp_map(w.reshaped({1, h, wd}), sv.warp, 0.0);
    Tensor ev = warp_map(e.reshaped({1, h, wd}), sv.warp, 1.0);
    Tensor mv = warp_map(m.reshaped({1, h, wd}), sv.warp, 0.0);
    for (std::size_t i = 0; i < mv.numel(); ++i) mv[i] *= sv.valid[i];
    const Shape plane{sv.valid.dim(0), sv.valid.dim(1)};
    weights.push_back(wv.reshaped(plane));
    entropies.push_back(ev.reshaped(plane));
    valids.push_back(mv.reshaped(plane));
  }
  StrongTargets t;
  t.images = stack(imgs);
  t.fuzzy.probs = stack(probs);
  t.fuzzy.support_size = fuzzy.support_size;
  t.select_w = stack(weights);
  t.loss_w.valid_mask = stack(valids);
  t.loss_w.entropy = stack(entropies);
  if (cfg.use_pixel_weight) {
    t.loss_w.weight = t.select_w;
  } else {
    t.loss_w.weight = Tensor(t.select_w.shape(), 1.0);
  }
  t.assign = fuzzy_argmax(t.fuzzy);
  return t;
}

void dump_batch(const std::filesystem::path& dir, const std::vector<std::pair<std::string, Tensor>>& items) {
  if (dir.empty()) return;
  try {
    std::filesystem::create_directories(dir);
    for (const auto& [name, t] : items) {
      if (!t.empty()) io::save_tensor(dir / (name + ".ftns"), t);
    }
  } catch (const std::exception&) {
    // The abort itself is the primary signal; a failed dump must not mask it.
  }
}

}  // namespace

Benchmark make_benchmark(const TrainConfig& config) {
  config.validate();
  Benchmark b;
  b.train = generate_dataset(config.scenes(), config.train_scenes, config.data_seed);
  b.eval = generate_dataset(config.scenes(), config.eval_scenes, mix_seed(config.data_seed, kEvalScenes));
  b.split = make_split(config.train_scenes, config.label_fraction, config.data_seed);
  return b;
}

TrainResult run_training(const TrainConfig& cfg, const Benchmark& bench, const TrainOptions& options) {
  cfg.validate();
  const SegNetConfig net = cfg.net();
  const bool unsup = cfg.use_unlabeled;
  if (unsup && bench.split.unlabeled.empty()) {
    throw ConfigError("training: unlabeled data requested but the split has no unlabeled scenes");
  }
  if (bench.train.scenes.empty() || bench.train.scenes.front().labels.shape[1] != cfg.image_size) {
    throw ConfigError("training: dataset does not match image_size");
  }
  const std::size_t i_max = cfg.total_iterations(bench.split);
  const std::size_t k_eff = cfg.use_fuzzy ? cfg.k : 1;
  const double lambda_c = cfg.use_contrastive ? cfg.lambda_c : 0.0;
  const double keep = cfg.mask_keep_prob;

  TrainResult result;
  result.student = init_params(net, mix_seed(cfg.seed, kInit));
  result.teacher = result.student.as_role(StoreRole::kTeacher);
  SgdMomentum opt(cfg.momentum, cfg.weight_decay);
  const AugmentationSpec weak_spec = AugmentationSpec::weak_default();
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t iter = 0; iter < i_max; ++iter) {
    tk::Graph g;
    const ParamVars vars = bind_params(g, result.student, true);

    // Labeled sub-batch, weakly augmented.
    std::vector<Tensor> limgs;
    std::vector<LabelMap> llabels;
    for (std::size_t j = 0; const std::size_t id : draw_batch(bench.split.labeled, cfg.batch_labeled,
                                                              mix_seed(cfg.seed, {kLabeledBatch, iter}))) {
      const SyntheticScene& sc = bench.train.scenes.at(id);
      AugmentedView v = apply_augmentation(sc.image, &sc.labels, weak_spec,
                                           mix_seed(cfg.seed, {kWeakLabeled, iter, j++}));
      limgs.push_back(std::move(v.image));
      llabels.push_back(std::move(v.labels));
    }
    const Tensor lbatch = stack(limgs);
    const LabelMap lmap = stack(llabels);
    const ForwardOutput lout = forward(vars, g.constant(lbatch), net);
    const LossTerm ls = supervised_ce(tk::softmax(lout.logits, 1), lmap);

    Tensor teacher_probs, ubatch;
    auto abort_nonfinite = [&](std::size_t it, const std::string& what) {
      dump_batch(options.dump_dir, {{"labeled_images", lbatch},
                                    {"unlabeled_images", ubatch},
                                    {"teacher_probs", teacher_probs},
                                    {"student_logits", lout.logits.value()}});
      throw TrainingAborted(what, it);
    };

    LossTerm lu{g.constant(Tensor::scalar(0.0)), true, 0.0};
    LossTerm lc{g.constant(Tensor::scalar(0.0)), true, 0.0};
    std::vector<double> cw_used;
    if (unsup) {
      std::vector<AugmentedView> weak;
      std::vector<Tensor> uimgs;
      for (std::size_t j = 0; const std::size_t id : draw_batch(bench.split.unlabeled, cfg.batch_unlabeled,
                                                                mix_seed(cfg.seed, {kUnlabeledBatch, iter}))) {
        weak.push_back(apply_augmentation(bench.train.scenes.at(id).image, nullptr, weak_spec,
                                          mix_seed(cfg.seed, {kWeakUnlabeled, iter, j++})));
        uimgs.push_back(weak.back().image);
      }
      ubatch = stack(uimgs);
      std::vector<Tensor> valids;
      for (const auto& v : weak) valids.push_back(v.valid);
      const Tensor weak_valid = stack(valids);

      teacher_probs = softmax_probs(result.teacher, net, ubatch);
      // The unsupervised terms would be NaN; stop before target generation rejects the map.
      if (!teacher_probs.all_finite()) {
        abort_nonfinite(iter, "non-finite teacher prediction at iteration " + std::to_string(iter));
      }
      const FuzzyLabelMap fuzzy = fuzzy_labels(teacher_probs, k_eff);
      const PixelWeightMap pw = make_pixel_weight_map(teacher_probs, cfg.tau, weak_valid);
      if (cfg.use_class_weight) {
        const auto freq = class_frequencies(fuzzy, weak_valid);
        std::optional<double> cap;
        if (cfg.class_weight_cap > 0.0) cap = cfg.class_weight_cap;
        cw_used = class_weights(freq, cfg.epsilon, cap).weights;
      } else {
        cw_used.assign(cfg.num_classes, 1.0);
      }

      auto [mask_a, mask_b] = complementary_channel_masks(weak.size(), net.feature_channels(), keep,
                                                          mix_seed(cfg.seed, {kChannelMask, iter}));
      for (double& m : mask_a.values()) m /= keep;
      for (double& m : mask_b.values()) m /= (1.0 - keep);

      std::vector<tk::Var> lu_terms, lc_terms;
      double n_valid = 0.0, n_sel = 0.0;
      bool lu_empty = true, lc_empty = true;
      const std::pair<std::uint64_t, const Tensor*> views[2] = {{kStrongA, &mask_a}, {kStrongB, &mask_b}};
      for (const auto& [stream, mask] : views) {
        const StrongTargets st = make_strong_view(weak, fuzzy, pw, cfg, cfg.seed, stream, iter);
        const ForwardOutput so = forward(vars, g.constant(st.images), net, *mask);
        const LossTerm t = unsupervised_kl(st.fuzzy, tk::softmax(so.logits, 1), st.loss_w, cw_used, cfg.kl_form);
        lu_terms.push_back(t.value);
        n_valid += t.count;
        lu_empty = lu_empty && t.empty;
        if (lambda_c > 0.0) {
          const std::size_t h = st.images.dim(2), w = st.images.dim(3);
          const tk::Var emb = project_embeddings(so.features, vars, net, h, w);
          const PrototypeSet protos = compute_prototypes(emb.value(), st.assign, st.select_w,
                                                         cfg.select_threshold, cfg.num_classes,
                                                         st.loss_w.valid_mask);
          const LossTerm c = contrastive_loss(emb, st.assign, protos);
          lc_terms.push_back(c.value);
          n_sel += c.count;
          lc_empty = lc_empty && c.empty;
        }
      }
      lu = {tk::scale(tk::add(lu_terms[0], lu_terms[1]), 0.5), lu_empty, n_valid};
      if (!lc_terms.empty()) lc = {tk::scale(tk::add(lc_terms[0], lc_terms[1]), 0.5), lc_empty, n_sel};
    }

    const tk::Var total = total_loss(g, ls.value, lu.value, lc.value, unsup ? cfg.lambda_u : 0.0,
                                     unsup ? lambda_c : 0.0);
    MetricsRecord rec;
    rec.iteration = iter;
    rec.lr = poly_lr(cfg.lr, iter, i_max, cfg.poly_power);
    rec.loss.supervised = ls.scalar();
    rec.loss.unsupervised = lu.scalar();
    rec.loss.contrastive = lc.scalar();
    rec.loss.total = total.value().item();
    rec.loss.n_valid = lu.count;
    rec.loss.lambda_u = unsup ? cfg.lambda_u : 0.0;
    rec.loss.lambda_c = unsup ? lambda_c : 0.0;
    rec.class_weights = cw_used;

    if (!std::isfinite(rec.loss.total) || !std::isfinite(rec.loss.supervised) ||
        !std::isfinite(rec.loss.unsupervised) || !std::isfinite(rec.loss.contrastive)) {
      abort_nonfinite(iter, "non-finite loss at iteration " + std::to_string(iter) + " (L_s " +
                                std::to_string(rec.loss.supervised) + ", L_u " +
                                std::to_string(rec.loss.unsupervised) + ", L_c " +
                                std::to_string(rec.loss.contrastive) + ")");
    }

    g.backward(total);
    const ParameterStore grads = collect_grads(g, vars);
    opt.step(result.student, grads, rec.lr);
    ema_update(result.teacher, result.student, cfg.ema_alpha);

    if (cfg.eval_every > 0 && (iter + 1) % cfg.eval_every == 0 && iter + 1 < i_max) {
      rec.eval = evaluate(result.student, net, bench.eval);
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (options.on_record) options.on_record(rec);
    result.records.push_back(std::move(rec));
  }
  result.iterations = i_max;
  result.final_eval = evaluate(result.student, net, bench.eval);
  if (!result.records.empty()) result.records.back().eval = result.final_eval;
  return result;
}

LabelMap predict(const ParameterStore& params, const SegNetConfig& net, const Dataset& data,
                 std::size_t first, std::size_t count) {
  if (first + count > data.scenes.size() || count == 0) throw ArgumentError("predict: bad scene range");
  std::vector<Tensor> imgs;
  for (std::size_t i = first; i < first + count; ++i) imgs.push_back(data.scenes[i].image);
  const Tensor probs = softmax_probs(params, net, stack(imgs));
  const std::size_t c = probs.dim(1), h = probs.dim(2), w = probs.dim(3), plane = h * w;
  LabelMap out(count, h, w, 0);
  for (std::size_t b = 0; b < count; ++b)
    for (std::size_t p = 0; p < plane; ++p) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k)
        if (probs[(b * c + k) * plane + p] > probs[(b * c + best) * plane + p]) best = k;
      out.values[b * plane + p] = static_cast<int>(best);
    }
  return out;
}

EvalResult evaluate(const ParameterStore& params, const SegNetConfig& net, const Dataset& data,
                    const std::string& split) {
  EvalResult r;
  r.split = split;
  r.confusion = ConfusionMatrix(net.num_classes);
  constexpr std::size_t kChunk = 10;
  for (std::size_t first = 0; first < data.scenes.size(); first += kChunk) {
    const std::size_t n = std::min(kChunk, data.scenes.size() - first);
    const LabelMap pred = predict(params, net, data, first, n);
    std::vector<LabelMap> truth;
    for (std::size_t i = first; i < first + n; ++i) truth.push_back(data.scenes[i].labels);
    update_confusion(r.confusion, pred, stack(truth));
  }
  r.iou = iou_per_class(r.confusion);
  r.miou = miou(r.iou);
  r.pixel_accuracy = pixel_accuracy(r.confusion);
  return r;
}

}  // namespace fuzzyseg
