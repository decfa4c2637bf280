#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "fuzzyseg/tensor.hpp"

// Tensor interchange file, little-endian throughout:
//   bytes 0..3   magic "FTNS"
//   u32          rank
//   u64 x rank   dims
//   u32          dtype tag (1 = float64, 2 = float32)
//   values       raw, row-major
namespace fuzzyseg::io {

enum class DType : std::uint32_t { kFloat64 = 1, kFloat32 = 2 };

void write_tensor(std::ostream& os, const Tensor& t, DType dtype = DType::kFloat64);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t,
                 DType dtype = DType::kFloat64);
Tensor load_tensor(const std::filesystem::path& path);

struct TensorHeader {
  Shape shape;
  DType dtype;
};
TensorHeader read_header(std::istream& is);

}  // namespace fuzzyseg::io
