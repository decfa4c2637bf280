#include "fuzzyseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fuzzyseg/errors.hpp"

namespace fuzzyseg {

AugmentationSpec AugmentationSpec::identity() { return {}; }

AugmentationSpec AugmentationSpec::weak_default() {
  AugmentationSpec s;
  s.kind = AugKind::kWeak;
  s.scale_min = 0.8;
  s.scale_max = 1.2;
  s.flip_prob = 0.5;
  return s;
}

AugmentationSpec AugmentationSpec::strong_default() {
  AugmentationSpec s;
  s.kind = AugKind::kStrong;
  s.scale_min = 0.9;
  s.scale_max = 1.1;
  s.flip_prob = 0.5;
  s.crop_h = 48;
  s.crop_w = 48;
  s.brightness_min = 0.6;
  s.brightness_max = 1.4;
  s.contrast_min = 0.6;
  s.contrast_max = 1.4;
  s.noise_sigma = 0.05;
  return s;
}

void AugmentationSpec::validate() const {
  if (!(scale_min > 0.0 && scale_min <= scale_max)) throw ConfigError("augmentation: bad scale range");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("augmentation: flip prob outside [0,1]");
  if ((crop_h == 0) != (crop_w == 0)) throw ConfigError("augmentation: crop needs both sides");
  if (!(brightness_min > 0.0 && brightness_min <= brightness_max)) {
    throw ConfigError("augmentation: bad brightness range");
  }
  if (!(contrast_min > 0.0 && contrast_min <= contrast_max)) {
    throw ConfigError("augmentation: bad contrast range");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("augmentation: negative noise sigma");
  if (kind == AugKind::kWeak) {
    const bool photometric = brightness_min != 1.0 || brightness_max != 1.0 ||
                             contrast_min != 1.0 || contrast_max != 1.0 || noise_sigma != 0.0;
    if (crop_h != 0 || photometric) {
      throw ConfigError("augmentation: weak views allow only scaling and horizontal flips");
    }
  }
}

GeometricWarp GeometricWarp::identity(std::size_t h, std::size_t w) {
  GeometricWarp g;
  g.in_h = g.out_h = g.scaled_h = h;
  g.in_w = g.out_w = g.scaled_w = w;
  return g;
}

std::optional<std::pair<double, double>> GeometricWarp::source(std::size_t y, std::size_t x) const {
  const long ys = static_cast<long>(y) + offset_y;
  long xs = static_cast<long>(x) + offset_x;
  if (ys < 0 || xs < 0 || ys >= static_cast<long>(scaled_h) || xs >= static_cast<long>(scaled_w)) {
    return std::nullopt;
  }
  if (flip) xs = static_cast<long>(scaled_w) - 1 - xs;
  auto map_axis = [](long s, std::size_t scaled, std::size_t in) {
    const double src = (static_cast<double>(s) + 0.5) * static_cast<double>(in) /
                           static_cast<double>(scaled) - 0.5;
    return std::clamp(src, 0.0, static_cast<double>(in - 1));
  };
  return std::pair{map_axis(ys, scaled_h, in_h), map_axis(xs, scaled_w, in_w)};
}

std::optional<std::pair<std::size_t, std::size_t>> GeometricWarp::nearest(std::size_t y,
                                                                           std::size_t x) const {
  auto src = source(y, x);
  if (!src) return std::nullopt;
  auto round_axis = [](double v, std::size_t in) {
    return std::min(static_cast<std::size_t>(std::floor(v + 0.5)), in - 1);
  };
  return std::pair{round_axis(src->first, in_h), round_axis(src->second, in_w)};
}

namespace {

long draw_offset(std::mt19937_64& rng, std::size_t scaled, std::size_t out) {
  const long lo = std::min(0L, static_cast<long>(scaled) - static_cast<long>(out));
  const long hi = std::max(0L, static_cast<long>(scaled) - static_cast<long>(out));
  return std::uniform_int_distribution<long>(lo, hi)(rng);
}

GeometricWarp draw_warp(std::mt19937_64& rng, std::size_t h, std::size_t w,
                        const AugmentationSpec& spec) {
  GeometricWarp g;
  g.in_h = h;
  g.in_w = w;
  double s = spec.scale_min;
  if (spec.scale_max > spec.scale_min) {
    s = std::uniform_real_distribution<double>(spec.scale_min, spec.scale_max)(rng);
  }
  g.scaled_h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(h) * s)));
  g.scaled_w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(w) * s)));
  g.flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < spec.flip_prob;
  g.out_h = spec.crop_h ? spec.crop_h : h;
  g.out_w = spec.crop_w ? spec.crop_w : w;
  g.offset_y = draw_offset(rng, g.scaled_h, g.out_h);
  g.offset_x = draw_offset(rng, g.scaled_w, g.out_w);
  return g;
}

}  // namespace

GeometricWarp sample_warp(std::size_t h, std::size_t w, const AugmentationSpec& spec,
                          std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  return draw_warp(rng, h, w, spec);
}

AugmentedView apply_augmentation(const Tensor& image, const LabelMap* labels,
                                 const AugmentationSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (image.rank() != 3) throw ArgumentError("apply_augmentation: image must be [Ch,H,W]");
  const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (labels && labels->shape != Shape{1, h, w}) {
    throw ArgumentError("apply_augmentation: labels must be {1,H,W} matching the image");
  }
  std::mt19937_64 rng(seed);
  AugmentedView v;
  v.warp = draw_warp(rng, h, w, spec);
  const GeometricWarp& g = v.warp;
  v.image = Tensor({ch, g.out_h, g.out_w}, 0.0);
  v.labels = LabelMap(1, g.out_h, g.out_w, LabelMap::kIgnore);
  v.valid = Tensor({g.out_h, g.out_w}, 0.0);

  for (std::size_t y = 0; y < g.out_h; ++y) {
    for (std::size_t x = 0; x < g.out_w; ++x) {
      const auto src = g.source(y, x);
      if (!src) continue;
      v.valid.at(y, x) = 1.0;
      const auto [sy, sx] = *src;
      const std::size_t y0 = static_cast<std::size_t>(sy);
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double wy = sy - static_cast<double>(y0);
      const double wx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < ch; ++c) {
        const double top = image.at(c, y0, x0) * (1.0 - wx) + image.at(c, y0, x1) * wx;
        const double bot = image.at(c, y1, x0) * (1.0 - wx) + image.at(c, y1, x1) * wx;
        v.image.at(c, y, x) = top * (1.0 - wy) + bot * wy;
      }
      if (labels) {
        const auto [ny, nx] = *g.nearest(y, x);
        v.labels.at(0, y, x) = labels->at(0, ny, nx);
      }
    }
  }

  const bool photometric = spec.brightness_min != 1.0 || spec.brightness_max != 1.0 ||
                           spec.contrast_min != 1.0 || spec.contrast_max != 1.0 ||
                           spec.noise_sigma > 0.0;
  if (photometric) {
    const double bright =
        std::uniform_real_distribution<double>(spec.brightness_min, spec.brightness_max)(rng);
    const double contrast =
        std::uniform_real_distribution<double>(spec.contrast_min, spec.contrast_max)(rng);
    double mean = 0.0, count = 0.0;
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t i = 0; i < g.out_h * g.out_w; ++i)
        if (v.valid[i] != 0.0) {
          mean += v.image[c * g.out_h * g.out_w + i];
          count += 1.0;
        }
    mean = count > 0.0 ? mean / count : 0.0;
    std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t i = 0; i < g.out_h * g.out_w; ++i) {
        if (v.valid[i] == 0.0) continue;
        double& px = v.image[c * g.out_h * g.out_w + i];
        double val = ((px - mean) * contrast + mean) * bright;
        if (spec.noise_sigma > 0.0) val += noise(rng);
        px = std::clamp(val, 0.0, 1.0);
      }
  }
  return v;
}

Tensor warp_map(const Tensor& map, const GeometricWarp& warp, double fill) {
  if (map.rank() != 3 || map.dim(1) != warp.in_h || map.dim(2) != warp.in_w) {
    throw ArgumentError("warp_map: map must be [K,H,W] matching the warp input");
  }
  const std::size_t k = map.dim(0);
  Tensor out({k, warp.out_h, warp.out_w}, fill);
  for (std::size_t y = 0; y < warp.out_h; ++y)
    for (std::size_t x = 0; x < warp.out_w; ++x) {
      const auto src = warp.nearest(y, x);
      if (!src) continue;
      for (std::size_t c = 0; c < k; ++c) out.at(c, y, x) = map.at(c, src->first, src->second);
    }
  return out;
}

std::pair<Tensor, Tensor> complementary_channel_masks(std::size_t batch_half, std::size_t channels,
                                                      double keep_prob, std::uint64_t seed) {
  if (batch_half == 0 || channels == 0) throw ArgumentError("channel masks need a positive size");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ArgumentError("keep_prob must lie in (0,1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(keep_prob);
  Tensor m({batch_half, channels});
  Tensor inv({batch_half, channels});
  for (std::size_t i = 0; i < m.numel(); ++i) {
    m[i] = keep(rng) ? 1.0 : 0.0;
    inv[i] = 1.0 - m[i];
  }
  return {std::move(m), std::move(inv)};
}

}  // namespace fuzzyseg
