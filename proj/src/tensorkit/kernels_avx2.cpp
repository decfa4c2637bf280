// AVX2 + FMA kernel variants. Compiled with -mavx2 -mfma; only reached
// through the dispatch table after a CPU feature check.

#include <immintrin.h>

#include "kernels_internal.hpp"

namespace fuzzyseg::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// 4x8 register block: 8 accumulators, 2 B loads and 4 broadcasts per k step.
inline void block_4x8(std::size_t k, const double* a, std::size_t lda,
                      const double* b, std::size_t ldb, double* c,
                      std::size_t ldc) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  auto acc = [](double* dst, __m256d v) {
    _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), v));
  };
  acc(c, c00);
  acc(c + 4, c01);
  acc(c + ldc, c10);
  acc(c + ldc + 4, c11);
  acc(c + 2 * ldc, c20);
  acc(c + 2 * ldc + 4, c21);
  acc(c + 3 * ldc, c30);
  acc(c + 3 * ldc + 4, c31);
}

// One row of A against columns [j0, n) of B.
inline void row_tail(std::size_t j0, std::size_t n, std::size_t k,
                     const double* arow, const double* b, std::size_t ldb,
                     double* crow) {
  std::size_t j = j0;
  for (; j + 4 <= n; j += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
      acc = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + p),
                            _mm256_loadu_pd(b + p * ldb + j), acc);
    }
    _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), acc));
  }
  for (; j < n; ++j) {
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += arow[p] * b[p * ldb + j];
    crow[j] += s;
  }
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc) {
  const std::size_t n8 = n - n % 8;
  const std::size_t m4 = m - m % 4;
  // Column panels outermost: a k x 8 slice of B stays in L1 while every row
  // block of A passes over it.
  for (std::size_t j = 0; j < n8; j += 8) {
    for (std::size_t i = 0; i < m4; i += 4) {
      block_4x8(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc);
    }
  }
  for (std::size_t i = 0; i < m4; ++i) row_tail(n8, n, k, a + i * lda, b, ldb, c + i * ldc);
  for (std::size_t i = m4; i < m; ++i) row_tail(0, n, k, a + i * lda, b, ldb, c + i * ldc);
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4),
                         s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

// Four rows of A against one row of B, sharing each B load.
inline void dot_4x1(std::size_t k, const double* a, std::size_t lda, const double* b,
                    double* c, std::size_t ldc) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const __m256d bv = _mm256_loadu_pd(b + p);
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + p), bv, s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + lda + p), bv, s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + 2 * lda + p), bv, s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + 3 * lda + p), bv, s3);
  }
  double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
  for (; p < k; ++p) {
    r0 += a[p] * b[p];
    r1 += a[lda + p] * b[p];
    r2 += a[2 * lda + p] * b[p];
    r3 += a[3 * lda + p] * b[p];
  }
  c[0] += r0;
  c[ldc] += r1;
  c[2 * ldc] += r2;
  c[3 * ldc] += r3;
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc) {
  const std::size_t m4 = m - m % 4;
  for (std::size_t i = 0; i < m4; i += 4) {
    for (std::size_t j = 0; j < n; ++j) {
      dot_4x1(k, a + i * lda, lda, b + j * ldb, c + i * ldc + j, ldc);
    }
  }
  for (std::size_t i = m4; i < m; ++i) {
    const double* arow = a + i * lda;
    for (std::size_t j = 0; j < n; ++j) {
      c[i * ldc + j] += dot_avx2(k, arow, b + j * ldb);
    }
  }
}

void axpby_avx2(std::size_t n, double alpha, const double* x, double beta,
                double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d yv = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), yv));
  }
  for (; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

constexpr KernelTable kAvx2{"avx2", gemm_nn_avx2, gemm_nt_avx2, axpby_avx2,
                            dot_avx2};

}  // namespace

const KernelTable& avx2_table_unchecked() { return kAvx2; }

}  // namespace fuzzyseg::kernels
