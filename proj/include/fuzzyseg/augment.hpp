#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>

#include "fuzzyseg/tensor.hpp"

// Weak/strong view generation. Images are channels-first [Ch,H,W] with values
// in [0,1]. A geometric transform is scale -> horizontal flip -> crop, where a
// crop window reaching outside the scaled image is padding: image 0, label
// kIgnore, valid 0. Images are resampled bilinearly, labels and any other
// per-pixel maps by nearest neighbour, both through the same source mapping.

namespace fuzzyseg {

enum class AugKind { kWeak, kStrong };

struct AugmentationSpec {
  AugKind kind = AugKind::kWeak;
  double scale_min = 1.0;
  double scale_max = 1.0;
  double flip_prob = 0.0;
  std::size_t crop_h = 0;  // 0 keeps the input size
  std::size_t crop_w = 0;
  double brightness_min = 1.0;
  double brightness_max = 1.0;
  double contrast_min = 1.0;
  double contrast_max = 1.0;
  double noise_sigma = 0.0;

  static AugmentationSpec identity();
  static AugmentationSpec weak_default();
  static AugmentationSpec strong_default();

  // Weak specs may only scale and flip; throws ConfigError otherwise.
  void validate() const;
};

// Output pixel -> source pixel mapping shared by the image and its maps.
struct GeometricWarp {
  std::size_t in_h = 0, in_w = 0;
  std::size_t out_h = 0, out_w = 0;
  std::size_t scaled_h = 0, scaled_w = 0;
  long offset_y = 0, offset_x = 0;
  bool flip = false;

  static GeometricWarp identity(std::size_t h, std::size_t w);

  // Continuous source coordinates, or nullopt for padding.
  std::optional<std::pair<double, double>> source(std::size_t y, std::size_t x) const;
  // Nearest source pixel (row, col), or nullopt for padding.
  std::optional<std::pair<std::size_t, std::size_t>> nearest(std::size_t y, std::size_t x) const;
};

struct AugmentedView {
  Tensor image;            // [Ch,out_h,out_w]
  LabelMap labels;         // {1,out_h,out_w}; all kIgnore when no labels given
  Tensor valid;            // [out_h,out_w]
  GeometricWarp warp;
};

GeometricWarp sample_warp(std::size_t h, std::size_t w, const AugmentationSpec& spec,
                          std::uint64_t seed);

AugmentedView apply_augmentation(const Tensor& image, const LabelMap* labels,
                                 const AugmentationSpec& spec, std::uint64_t seed);

// Nearest-neighbour warp of a [K,H,W] map; padding gets `fill`.
Tensor warp_map(const Tensor& map, const GeometricWarp& warp, double fill);

// Pair (m, 1 - m) of [batch_half, channels] Bernoulli(keep_prob) masks.
std::pair<Tensor, Tensor> complementary_channel_masks(std::size_t batch_half, std::size_t channels,
                                                      double keep_prob, std::uint64_t seed);

}  // namespace fuzzyseg
