#include "simlab/kernels.hpp"

namespace simlab::kernels {

namespace {

double dot_scalar(const double *a, const double *b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double *x, double *y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double *w, std::size_t rows, std::size_t cols, const double *x, double *y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot_scalar(w + r * cols, x, cols);
}

void gemv_t_scalar(const double *w, std::size_t rows, std::size_t cols, const double *v, double *y) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (v[r] == 0.0) continue;
    axpy_scalar(v[r], w + r * cols, y, cols);
  }
}

void ger_scalar(double *w, std::size_t rows, std::size_t cols, double alpha, const double *a, const double *b) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double s = alpha * a[r];
    if (s == 0.0) continue;
    axpy_scalar(s, b, w + r * cols, cols);
  }
}

} // namespace

const KernelTable &scalar_table() {
  static const KernelTable table{"scalar", dot_scalar, axpy_scalar, gemv_scalar, gemv_t_scalar, ger_scalar};
  return table;
}

} // namespace simlab::kernels
