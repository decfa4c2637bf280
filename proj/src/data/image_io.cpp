#include <cmath>
#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fuzzyseg/data.hpp"
#include "fuzzyseg/errors.hpp"

namespace fuzzyseg {
namespace {

std::string header(int kind, std::size_t w, std::size_t h) {
  return "P" + std::to_string(kind) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
}

unsigned char to_byte(double v) {
  if (!std::isfinite(v)) v = 0.0;
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

const std::vector<Rgb>& class_palette() {
  static const std::vector<Rgb> palette{
      {64, 64, 64},    // background
      {230, 25, 75},   // disk
      {60, 180, 75},   // rectangle
      {255, 225, 25},  // triangle
      {0, 130, 200},   // ring
      {245, 130, 48},  // cross
      {70, 240, 240},  // diamond
  };
  return palette;
}

std::string export_ppm(const LabelMap& labels, std::size_t index, const std::vector<Rgb>& palette) {
  if (labels.shape.size() != 3 || index >= labels.shape[0]) throw ArgumentError("export_ppm: bad label map index");
  const std::size_t h = labels.shape[1], w = labels.shape[2];
  std::string out = header(6, w, h);
  bool warned = false;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const int c = labels.at(index, y, x);
      Rgb px;
      if (c == LabelMap::kIgnore) {
        px = kIgnoreColor;
      } else if (c >= 0 && static_cast<std::size_t>(c) < palette.size()) {
        px = palette[static_cast<std::size_t>(c)];
      } else {
        px = kUnknownColor;
        if (!warned) {
          std::cerr << "warning: export_ppm: class index " << c << " has no palette entry\n";
          warned = true;
        }
      }
      out.push_back(static_cast<char>(px.r));
      out.push_back(static_cast<char>(px.g));
      out.push_back(static_cast<char>(px.b));
    }
  return out;
}

std::string export_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ArgumentError("export_ppm: expected a [3,H,W] image");
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::string out = header(6, w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.push_back(static_cast<char>(to_byte(image.at(c, y, x))));
  return out;
}

std::string export_pgm(const Tensor& map) {
  std::size_t h = 0, w = 0;
  if (map.rank() == 2) {
    h = map.dim(0);
    w = map.dim(1);
  } else if (map.rank() == 3 && map.dim(0) == 1) {
    h = map.dim(1);
    w = map.dim(2);
  } else {
    throw ArgumentError("export_pgm: expected an [H,W] map, got " + shape_to_string(map.shape()));
  }
  std::string out = header(5, w, h);
  for (double v : map.values()) out.push_back(static_cast<char>(to_byte(v)));
  return out;
}

PnmImage parse_pnm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    std::size_t start = pos, v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      ++pos;
    }
    if (pos == start) throw IoError("pnm: malformed header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw IoError("pnm: not a binary P5/P6 file");
  }
  PnmImage img;
  img.kind = bytes[1] - '0';
  pos = 2;
  img.width = number();
  img.height = number();
  if (number() != 255) throw IoError("pnm: only maxval 255 is supported");
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = img.width * img.height * (img.kind == 6 ? 3 : 1);
  if (bytes.size() < pos + n) throw IoError("pnm: truncated raster");
  img.pixels.assign(bytes.begin() + static_cast<long>(pos), bytes.begin() + static_cast<long>(pos + n));
  return img;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace fuzzyseg
