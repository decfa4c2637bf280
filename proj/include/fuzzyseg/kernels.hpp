#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops. Every routine has a portable scalar reference
// and, where the target supports it, an AVX2/FMA variant. The active table is
// chosen once at startup from CPU features; FUZZYSEG_KERNELS=scalar|avx2
// overrides the choice. Variants agree with the reference up to
// floating-point reassociation (tests pin the bound).

namespace fuzzyseg::kernels {

struct KernelTable {
  const char* name;

  // C[m x n] += A[m x k] * B[k x n], all row-major with leading dimensions.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);

  // C[m x n] += A[m x k] * B[n x k]^T.
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);

  // y <- alpha * x + beta * y
  void (*axpby)(std::size_t n, double alpha, const double* x, double beta,
                double* y);

  double (*dot)(std::size_t n, const double* x, const double* y);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks the features.
const KernelTable* avx2_table();

// Table in use for this process.
const KernelTable& active();

// Forces a table by name ("scalar", "avx2"); returns false if unavailable.
bool select(std::string_view name);

}  // namespace fuzzyseg::kernels
