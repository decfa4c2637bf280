#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fuzzyseg/tensor.hpp"

namespace fuzzyseg {

// Class 0 is background; classes 1.. are drawn as disk, rectangle, triangle,
// ring, cross, diamond (at most 7 classes in total).
struct SceneConfig {
  std::size_t num_classes = 4;
  std::size_t height = 64;
  std::size_t width = 64;
  // Per-class probability that a scene contains the class; entry 0 ignored.
  std::vector<double> occurrence{1.0, 0.8, 0.8, 0.25};
  std::size_t max_instances = 2;
  double min_radius = 5.0;
  double max_radius = 10.0;
  double noise_sigma = 0.06;
  // Object colour is the class base colour plus uniform jitter of this
  // half-width per channel; values >= 1 make colour uninformative.
  double color_jitter = 0.3;

  void validate() const;
};

struct SceneMeta {
  std::vector<int> shape_counts;  // instances per class
  std::uint64_t seed = 0;
};

struct SyntheticScene {
  Tensor image;     // [3,H,W] in [0,1]
  LabelMap labels;  // {1,H,W}
  SceneMeta meta;
};

// Deterministic per (config, seed). With `noise_free`, texture and pixel
// noise are omitted so every shape is a flat colour region.
SyntheticScene generate_scene(const SceneConfig& config, std::uint64_t seed,
                              bool noise_free = false);

struct DatasetSplit {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
  double fraction = 1.0;
  std::uint64_t seed = 0;
};

DatasetSplit make_split(std::size_t n, double fraction, std::uint64_t seed);

// Parses "1/8", "0.125" or "1".
double parse_fraction(const std::string& text);

struct Dataset {
  SceneConfig config;
  std::vector<SyntheticScene> scenes;
};

// Scene i uses seed mix(base_seed, i).
Dataset generate_dataset(const SceneConfig& config, std::size_t count, std::uint64_t base_seed);

// One record per line: "<id> <seed> <labeled 0|1>".
void write_manifest(std::ostream& os, const Dataset& data, const DatasetSplit& split);

// --- image files ---------------------------------------------------------------

struct Rgb {
  unsigned char r, g, b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Fixed palette; index i is the colour of class i.
const std::vector<Rgb>& class_palette();
inline constexpr Rgb kIgnoreColor{0, 0, 0};
inline constexpr Rgb kUnknownColor{255, 0, 255};

// Binary P6 of one label plane ([H,W] slice `index` of a {N,H,W} map).
// Ignore renders black, out-of-palette classes magenta (with a warning on
// stderr).
std::string export_ppm(const LabelMap& labels, std::size_t index = 0,
                       const std::vector<Rgb>& palette = class_palette());

// Binary P6 of a [3,H,W] image in [0,1].
std::string export_ppm(const Tensor& image);

// Binary P5 of an [H,W] (or [1,H,W]) map in [0,1]; value = round(255 x).
std::string export_pgm(const Tensor& map);

struct PnmImage {
  int kind = 0;  // 5 or 6
  std::size_t width = 0, height = 0;
  std::vector<unsigned char> pixels;
};
PnmImage parse_pnm(const std::string& bytes);

void write_file(const std::string& path, const std::string& bytes);

}  // namespace fuzzyseg
