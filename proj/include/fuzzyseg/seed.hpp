#pragma once

#include <cstdint>
#include <initializer_list>

namespace fuzzyseg {

// splitmix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives independent stream seeds from a base seed and a path of tags.
constexpr std::uint64_t mix_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(base);
  for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ull));
  return h;
}

constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) { return mix_seed(base, {tag}); }

}  // namespace fuzzyseg
