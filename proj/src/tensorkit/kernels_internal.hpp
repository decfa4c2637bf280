#pragma once

#include "fuzzyseg/kernels.hpp"

namespace fuzzyseg::kernels {

// Defined only when the AVX2 translation unit is compiled in.
const KernelTable& avx2_table_unchecked();

}  // namespace fuzzyseg::kernels
