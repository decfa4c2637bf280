#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "fuzzyseg/data.hpp"
#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/seed.hpp"

namespace fuzzyseg {
namespace {

enum class ShapeKind { kDisk, kRectangle, kTriangle, kRing, kCross, kDiamond };

struct Placed {
  ShapeKind kind;
  double cy, cx, r, aspect, angle;
};

// Inside test in the shape's local frame.
bool covers(const Placed& s, double y, double x) {
  const double dy = y - s.cy, dx = x - s.cx;
  const double ca = std::cos(s.angle), sa = std::sin(s.angle);
  const double u = ca * dx + sa * dy;   // local x
  const double v = -sa * dx + ca * dy;  // local y
  const double r = s.r;
  switch (s.kind) {
    case ShapeKind::kDisk:
      return dx * dx + dy * dy <= r * r;
    case ShapeKind::kRectangle:
      return std::abs(u) <= r && std::abs(v) <= r * s.aspect;
    case ShapeKind::kTriangle: {
      // Equilateral, circumradius r, pointing along -v.
      const double h = 1.5 * r;
      const double top = -r;
      if (v < top || v > top + h) return false;
      const double half = (v - top) / h * (r * std::sqrt(3.0) / 2.0);
      return std::abs(u) <= half;
    }
    case ShapeKind::kRing: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.36 * r * r;
    }
    case ShapeKind::kCross:
      return (std::abs(u) <= r && std::abs(v) <= 0.35 * r) ||
             (std::abs(v) <= r && std::abs(u) <= 0.35 * r);
    case ShapeKind::kDiamond:
      return std::abs(u) + std::abs(v) <= r;
  }
  return false;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

void SceneConfig::validate() const {
  if (num_classes < 2 || num_classes > 7) throw ArgumentError("scene: class count must be in [2,7]");
  if (occurrence.size() != num_classes) throw ArgumentError("scene: one occurrence per class");
  for (std::size_t c = 1; c < num_classes; ++c) {
    if (!(occurrence[c] > 0.0 && occurrence[c] <= 1.0)) {
      throw ArgumentError("scene: occurrence probabilities must lie in (0,1]");
    }
  }
  if (height < 8 || width < 8) throw ArgumentError("scene: image too small");
  if (!(min_radius > 0.0 && min_radius <= max_radius)) throw ArgumentError("scene: bad radius range");
  if (max_instances == 0) throw ArgumentError("scene: max_instances must be positive");
  if (!(color_jitter >= 0.0)) throw ArgumentError("scene: color_jitter must be nonnegative");
}

SyntheticScene generate_scene(const SceneConfig& config, std::uint64_t seed, bool noise_free) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const std::size_t h = config.height, w = config.width;

  SyntheticScene scene;
  scene.meta.seed = seed;
  scene.meta.shape_counts.assign(config.num_classes, 0);
  scene.labels = LabelMap(1, h, w, 0);
  scene.image = Tensor({3, h, w});

  // Background: a smooth two-colour gradient plus low-frequency texture.
  double bg0[3], bg1[3];
  for (int c = 0; c < 3; ++c) {
    bg0[c] = 0.15 + 0.5 * u01(rng);
    bg1[c] = 0.15 + 0.5 * u01(rng);
  }
  const double grad_angle = 2.0 * M_PI * u01(rng);
  const double fy = 0.15 + 0.3 * u01(rng), fx = 0.15 + 0.3 * u01(rng), ph = 2.0 * M_PI * u01(rng);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double t = 0.5 + 0.5 * std::sin(grad_angle) * (static_cast<double>(y) / h - 0.5) +
                       0.5 * std::cos(grad_angle) * (static_cast<double>(x) / w - 0.5);
      const double tex = noise_free ? 0.0 : 0.06 * std::sin(fy * y + ph) * std::cos(fx * x - ph);
      for (std::size_t c = 0; c < 3; ++c)
        scene.image.at(c, y, x) = clamp01(bg0[c] * (1.0 - t) + bg1[c] * t + tex);
    }

  // Decide instances, then place them without overlap (1px margin).
  std::vector<std::size_t> instances;
  for (std::size_t c = 1; c < config.num_classes; ++c) {
    if (u01(rng) >= config.occurrence[c]) continue;
    const std::size_t k = 1 + std::uniform_int_distribution<std::size_t>(0, config.max_instances - 1)(rng);
    for (std::size_t i = 0; i < k; ++i) instances.push_back(c);
  }
  std::shuffle(instances.begin(), instances.end(), rng);

  std::vector<std::vector<char>> occupied(h, std::vector<char>(w, 0));
  for (std::size_t cls : instances) {
    double radius = config.min_radius + (config.max_radius - config.min_radius) * u01(rng);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      if (attempt > 0 && attempt % 20 == 0) radius = std::max(2.0, radius * 0.8);
      Placed s{static_cast<ShapeKind>((cls - 1) % 6),
               radius + u01(rng) * (static_cast<double>(h) - 2.0 * radius),
               radius + u01(rng) * (static_cast<double>(w) - 2.0 * radius), radius,
               0.5 + 0.5 * u01(rng), 2.0 * M_PI * u01(rng)};
      if (s.kind == ShapeKind::kDisk || s.kind == ShapeKind::kRing) s.angle = 0.0;
      std::vector<std::pair<std::size_t, std::size_t>> pix;
      bool clash = false;
      for (std::size_t y = 0; y < h && !clash; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          if (!covers(s, static_cast<double>(y), static_cast<double>(x))) continue;
          for (int dy = -1; dy <= 1 && !clash; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
              if (yy >= 0 && xx >= 0 && yy < static_cast<long>(h) && xx < static_cast<long>(w) &&
                  occupied[yy][xx]) {
                clash = true;
                break;
              }
            }
          if (clash) break;
          pix.emplace_back(y, x);
        }
      if (clash || pix.empty()) continue;
      // Class colours overlap once jittered, so shape still matters.
      static constexpr double kBase[6][3] = {{0.85, 0.25, 0.2}, {0.2, 0.7, 0.3}, {0.25, 0.35, 0.9},
                                             {0.9, 0.8, 0.2}, {0.7, 0.3, 0.8}, {0.2, 0.8, 0.85}};
      double col[3];
      for (std::size_t c = 0; c < 3; ++c) {
        col[c] = clamp01(kBase[(cls - 1) % 6][c] + config.color_jitter * (2.0 * u01(rng) - 1.0));
      }
      // Keep some contrast against the local background.
      const auto [py, px] = pix[pix.size() / 2];
      double diff = 0.0;
      for (std::size_t c = 0; c < 3; ++c) diff += std::abs(col[c] - scene.image.at(c, py, px));
      if (diff < 0.45) {
        for (std::size_t c = 0; c < 3; ++c) {
          col[c] = scene.image.at(c, py, px) > 0.5 ? col[c] * 0.35 : 0.65 + 0.35 * col[c];
        }
      }
      for (auto [y, x] : pix) {
        occupied[y][x] = 1;
        scene.labels.at(0, y, x) = static_cast<int>(cls);
        for (std::size_t c = 0; c < 3; ++c) scene.image.at(c, y, x) = col[c];
      }
      ++scene.meta.shape_counts[cls];
      placed = true;
    }
    if (!placed) {
      throw ArgumentError("scene: could not place a shape after 100 attempts (image too small?)");
    }
  }

  if (!noise_free) {
    std::normal_distribution<double> noise(0.0, config.noise_sigma);
    for (double& v : scene.image.values()) v = clamp01(v + noise(rng));
  }
  return scene;
}

DatasetSplit make_split(std::size_t n, double fraction, std::uint64_t seed) {
  if (n == 0) throw ArgumentError("make_split: empty dataset");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ArgumentError("make_split: fraction must lie in (0,1]");
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * n)));
  DatasetSplit s;
  s.fraction = fraction;
  s.seed = seed;
  s.labeled.assign(ids.begin(), ids.begin() + static_cast<long>(k));
  s.unlabeled.assign(ids.begin() + static_cast<long>(k), ids.end());
  std::sort(s.labeled.begin(), s.labeled.end());
  std::sort(s.unlabeled.begin(), s.unlabeled.end());
  return s;
}

double parse_fraction(const std::string& text) {
  double v = 0.0;
  try {
    const auto slash = text.find('/');
    std::size_t used = 0;
    if (slash == std::string::npos) {
      v = std::stod(text, &used);
      if (used != text.size()) throw ConfigError("bad fraction '" + text + "'");
    } else {
      const std::string a = text.substr(0, slash), b = text.substr(slash + 1);
      const double num = std::stod(a, &used);
      if (used != a.size()) throw ConfigError("bad fraction '" + text + "'");
      const double den = std::stod(b, &used);
      if (used != b.size() || den == 0.0) throw ConfigError("bad fraction '" + text + "'");
      v = num / den;
    }
  } catch (const std::logic_error&) {
    throw ConfigError("bad fraction '" + text + "'");
  }
  if (!(v > 0.0 && v <= 1.0)) throw ConfigError("fraction '" + text + "' outside (0,1]");
  return v;
}

Dataset generate_dataset(const SceneConfig& config, std::size_t count, std::uint64_t base_seed) {
  Dataset d;
  d.config = config;
  d.scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) d.scenes.push_back(generate_scene(config, mix_seed(base_seed, i)));
  return d;
}

void write_manifest(std::ostream& os, const Dataset& data, const DatasetSplit& split) {
  std::vector<char> labeled(data.scenes.size(), 0);
  for (auto i : split.labeled) labeled.at(i) = 1;
  for (std::size_t i = 0; i < data.scenes.size(); ++i) {
    os << i << ' ' << data.scenes[i].meta.seed << ' ' << int(labeled[i]) << '\n';
  }
}

}  // namespace fuzzyseg
