#include "fuzzyseg/model.hpp"

#include <cmath>
#include <random>

#include "fuzzyseg/errors.hpp"

namespace fuzzyseg {
namespace {

std::string enc(std::size_t s, const char* p) { return "enc" + std::to_string(s) + "." + p; }
std::string dec(std::size_t s, const char* p) { return "dec" + std::to_string(s) + "." + p; }

const tk::Var& need(const ParamVars& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw StateError("parameter '" + name + "' is not initialized");
  return it->second;
}

}  // namespace

void SegNetConfig::validate() const {
  if (in_channels == 0 || base_width == 0 || depth == 0 || num_classes == 0 || embed_dim == 0) {
    throw ConfigError("network dimensions must be positive");
  }
  if (depth > 6) throw ConfigError("network depth above 6 is not supported");
  if (embed_dim > feature_channels()) {
    throw ConfigError("embedding dimension exceeds the feature width");
  }
}

bool is_projection_param(const std::string& name) { return name.rfind("proj.", 0) == 0; }

ParamVars bind_params(tk::Graph& g, const ParameterStore& store, bool trainable) {
  ParamVars vars;
  for (const auto& [name, t] : store.entries()) {
    vars.emplace(name, trainable ? g.parameter(t) : g.constant(t));
  }
  return vars;
}

ParameterStore collect_grads(const tk::Graph& g, const ParamVars& vars) {
  ParameterStore out;
  for (const auto& [name, v] : vars) out.set(name, g.grad(v));
  return out;
}

ParameterStore init_params(const SegNetConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ParameterStore store;
  auto he = [&rng](std::size_t cout, std::size_t cin, std::size_t k) {
    Tensor w({cout, cin, k, k});
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(cin * k * k)));
    for (double& v : w.values()) v = dist(rng);
    return w;
  };
  std::size_t cin = config.in_channels;
  for (std::size_t s = 0; s < config.depth; ++s) {
    store.set(enc(s, "w"), he(config.stage_width(s), cin, 3));
    store.set(enc(s, "b"), Tensor({config.stage_width(s)}, 0.0));
    cin = config.stage_width(s);
  }
  // Decoder stage s maps stage_width(s+1) -> stage_width(s) at the resolution
  // of encoder stage s.
  for (std::size_t s = config.depth - 1; s-- > 0;) {
    store.set(dec(s, "w"), he(config.stage_width(s), config.stage_width(s + 1), 3));
    store.set(dec(s, "b"), Tensor({config.stage_width(s)}, 0.0));
  }
  store.set("cls.w", Tensor({config.num_classes, config.decoder_width(), 1, 1}, 0.0));
  store.set("cls.b", Tensor({config.num_classes}, 0.0));
  store.set("proj.w", he(config.embed_dim, config.feature_channels(), 1));
  store.set("proj.b", Tensor({config.embed_dim}, 0.0));
  return store;
}

ForwardOutput forward(const ParamVars& params, tk::Var image, const SegNetConfig& config,
                      const Tensor& feature_mask) {
  config.validate();
  const Shape& s = image.shape();
  const std::size_t factor = std::size_t{1} << config.depth;
  if (s.size() != 4 || s[1] != config.in_channels || s[2] % factor || s[3] % factor) {
    throw ArgumentError("forward: image " + shape_to_string(s) + " incompatible with config");
  }
  std::vector<tk::Var> skips;
  tk::Var x = image;
  for (std::size_t st = 0; st < config.depth; ++st) {
    x = tk::silu(tk::conv2d(x, need(params, enc(st, "w")), need(params, enc(st, "b")), 2, 1));
    skips.push_back(x);
  }
  if (!feature_mask.empty()) x = tk::scale_channels(x, feature_mask);
  const tk::Var features = x;
  for (std::size_t st = config.depth - 1; st-- > 0;) {
    const Shape& cur = x.shape();
    x = tk::upsample_bilinear(x, cur[2] * 2, cur[3] * 2);
    x = tk::silu(tk::conv2d(x, need(params, dec(st, "w")), need(params, dec(st, "b")), 1, 1));
    x = tk::add(x, skips[st]);
  }
  tk::Var logits = tk::conv2d(x, need(params, "cls.w"), need(params, "cls.b"), 1, 0);
  logits = tk::upsample_bilinear(logits, s[2], s[3]);
  return {logits, features};
}

tk::Var project_embeddings(tk::Var features, const ParamVars& params, const SegNetConfig& config,
                           std::size_t out_h, std::size_t out_w) {
  const tk::Var& w = need(params, "proj.w");
  if (w.shape() != Shape{config.embed_dim, config.feature_channels(), 1, 1}) {
    throw ConfigError("projection head does not match embed_dim " +
                      std::to_string(config.embed_dim));
  }
  if (features.shape().size() != 4 || features.shape()[1] != config.feature_channels()) {
    throw ConfigError("projection head input has the wrong channel count");
  }
  tk::Var e = tk::silu(tk::conv2d(features, w, need(params, "proj.b"), 1, 0));
  return tk::upsample_bilinear(e, out_h, out_w);
}

}  // namespace fuzzyseg
