#include "simlab/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define SIMLAB_HAVE_AVX2_BUILD 1
#include <immintrin.h>
#else
#define SIMLAB_HAVE_AVX2_BUILD 0
#endif

namespace simlab::kernels {

#if SIMLAB_HAVE_AVX2_BUILD

namespace {

#define SIMLAB_AVX2 __attribute__((target("avx2,fma")))

SIMLAB_AVX2 inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

SIMLAB_AVX2 double dot_avx2(const double *a, const double *b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

SIMLAB_AVX2 void axpy_avx2(double alpha, const double *x, double *y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

SIMLAB_AVX2 void gemv_avx2(const double *w, std::size_t rows, std::size_t cols, const double *x, double *y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot_avx2(w + r * cols, x, cols);
}

SIMLAB_AVX2 void gemv_t_avx2(const double *w, std::size_t rows, std::size_t cols, const double *v, double *y) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (v[r] == 0.0) continue;
    axpy_avx2(v[r], w + r * cols, y, cols);
  }
}

SIMLAB_AVX2 void ger_avx2(double *w, std::size_t rows, std::size_t cols, double alpha, const double *a,
                          const double *b) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double s = alpha * a[r];
    if (s == 0.0) continue;
    axpy_avx2(s, b, w + r * cols, cols);
  }
}

} // namespace

const KernelTable *avx2_table() {
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  static const KernelTable table{"avx2", dot_avx2, axpy_avx2, gemv_avx2, gemv_t_avx2, ger_avx2};
  return supported ? &table : nullptr;
}

#else

const KernelTable *avx2_table() { return nullptr; }

#endif

} // namespace simlab::kernels
