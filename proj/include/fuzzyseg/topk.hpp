#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fuzzyseg {

// Indices of the k largest values, ordered by descending value and then by
// ascending index (so among ties the lower class index wins).
std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k);

// Allocation-free variant for per-pixel use; `out` must hold k entries.
void topk_indices_into(std::span<const double> values, std::span<std::size_t> out);

// Lowest index among the maxima.
std::size_t argmax_index(std::span<const double> values);

}  // namespace fuzzyseg
