#include "fuzzyseg/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "fuzzyseg/errors.hpp"

namespace fuzzyseg::io {
namespace {

constexpr std::array<char, 4> kMagic{'F', 'T', 'N', 'S'};

template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> buf;
  std::memcpy(buf.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
  os.write(buf.data(), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  std::array<char, sizeof(T)> buf;
  if (!is.read(buf.data(), sizeof(T))) throw IoError("tensor file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
  T v;
  std::memcpy(&v, buf.data(), sizeof(T));
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t, DType dtype) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(os, d);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(dtype));
  for (double v : t.values()) {
    if (dtype == DType::kFloat64) {
      put_le<double>(os, v);
    } else {
      put_le<float>(os, static_cast<float>(v));
    }
  }
  if (!os) throw IoError("failed writing tensor");
}

TensorHeader read_header(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError("not a tensor file (bad magic)");
  }
  const auto rank = get_le<std::uint32_t>(is);
  if (rank == 0 || rank > 8) throw IoError("tensor file has unsupported rank");
  TensorHeader h;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = get_le<std::uint64_t>(is);
    if (d == 0) throw IoError("tensor file has a zero dimension");
    h.shape.push_back(static_cast<std::size_t>(d));
  }
  const auto tag = get_le<std::uint32_t>(is);
  if (tag != 1 && tag != 2) throw IoError("tensor file has unknown dtype tag");
  h.dtype = static_cast<DType>(tag);
  return h;
}

Tensor read_tensor(std::istream& is) {
  const TensorHeader h = read_header(is);
  std::vector<double> values(shape_numel(h.shape));
  for (double& v : values) {
    v = h.dtype == DType::kFloat64 ? get_le<double>(is) : static_cast<double>(get_le<float>(is));
  }
  return Tensor(h.shape, std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(os, t, dtype);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace fuzzyseg::io
