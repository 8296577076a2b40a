#pragma once

// Dense double-precision inner loops used by the neural core. Every kernel has
// a scalar reference and, on x86-64, an AVX2+FMA variant; the variant is
// chosen once at runtime from CPU support and SIMLAB_KERNELS
// (scalar|avx2|auto).

#include <cstddef>
#include <span>
#include <string_view>

namespace simlab::kernels {

struct KernelTable {
  const char *name;
  // sum_i a[i] * b[i]
  double (*dot)(const double *a, const double *b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double *x, double *y, std::size_t n);
  // y += W x, W row-major rows x cols
  void (*gemv)(const double *w, std::size_t rows, std::size_t cols, const double *x, double *y);
  // y += W^T v
  void (*gemv_t)(const double *w, std::size_t rows, std::size_t cols, const double *v, double *y);
  // W += alpha * a b^T
  void (*ger)(double *w, std::size_t rows, std::size_t cols, double alpha, const double *a, const double *b);
};

const KernelTable &scalar_table();
// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable *avx2_table();

const KernelTable &active();
// "scalar", "avx2" or "auto". Throws UsageError for unknown names or an
// unavailable backend.
void select_backend(std::string_view name);
std::string_view backend_name();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void gemv(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
                 std::span<double> y) {
  active().gemv(w.data(), rows, cols, x.data(), y.data());
}
inline void gemv_t(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> v,
                   std::span<double> y) {
  active().gemv_t(w.data(), rows, cols, v.data(), y.data());
}
inline void ger(std::span<double> w, std::size_t rows, std::size_t cols, double alpha, std::span<const double> a,
                std::span<const double> b) {
  active().ger(w.data(), rows, cols, alpha, a.data(), b.data());
}

} // namespace simlab::kernels
