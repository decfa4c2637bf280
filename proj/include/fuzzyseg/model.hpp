#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

#include "fuzzyseg/graph.hpp"
#include "fuzzyseg/params.hpp"

// Tiny encoder-decoder segmentation net with a projection head.
//
//   encoder: `depth` stride-2 3x3 conv + SiLU stages, widths base * 2^s
//   features: last encoder output (optionally channel-masked)
//   decoder: per stage, 2x bilinear upsample, 3x3 conv + SiLU, additive skip
//            from the matching encoder stage
//   classifier: 1x1 conv at half resolution, logits resized to the input
//   projection: 1x1 conv + SiLU on the features, resized to label resolution
//
// SiLU keeps every path smooth so finite-difference checks are meaningful.

namespace fuzzyseg {

struct SegNetConfig {
  std::size_t in_channels = 3;
  std::size_t base_width = 16;
  std::size_t depth = 3;
  std::size_t num_classes = 4;
  std::size_t embed_dim = 16;

  std::size_t stage_width(std::size_t stage) const { return base_width << stage; }
  std::size_t feature_channels() const { return stage_width(depth - 1); }
  std::size_t decoder_width() const { return base_width; }

  void validate() const;
};

using ParamVars = std::map<std::string, tk::Var>;

// Registers every entry of `store` on `g`, as trainable leaves or constants.
ParamVars bind_params(tk::Graph& g, const ParameterStore& store, bool trainable);

// Copies gradients of trainable leaves back into a store-shaped container.
ParameterStore collect_grads(const tk::Graph& g, const ParamVars& vars);

ParameterStore init_params(const SegNetConfig& config, std::uint64_t seed);

struct ForwardOutput {
  tk::Var logits;    // [N,C,H,W]
  tk::Var features;  // [N,F,H/2^depth,W/2^depth], masked if a mask was given
};

// image: [N,in_channels,H,W] with H, W divisible by 2^depth.
// feature_mask: empty, or [N,F] multiplicative channel mask.
ForwardOutput forward(const ParamVars& params, tk::Var image, const SegNetConfig& config,
                      const Tensor& feature_mask = {});

tk::Var project_embeddings(tk::Var features, const ParamVars& params, const SegNetConfig& config,
                           std::size_t out_h, std::size_t out_w);

// Names of the parameters that make up the segmentation path (all but the
// projection head).
bool is_projection_param(const std::string& name);

}  // namespace fuzzyseg
