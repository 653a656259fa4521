#include "ttsnap/kernels.hpp"

namespace ttsnap::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemv_bias_scalar(const double* w, const double* bias, const double* x, double* y,
                      std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = bias[r] + dot_scalar(w + r * cols, x, cols);
}

void gemv_transposed_scalar(const double* w, const double* delta, double* y, std::size_t rows,
                            std::size_t cols) {
  for (std::size_t c = 0; c < cols; ++c) y[c] = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double d = delta[r];
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * d;
  }
}

void rank1_update_scalar(double* w, const double* delta, const double* x, std::size_t rows,
                         std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double d = delta[r];
    double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += d * x[c];
  }
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void momentum_step_scalar(double* params, double* velocity, const double* grad, double lr,
                          double momentum, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    velocity[i] = momentum * velocity[i] - lr * grad[i];
    params[i] += velocity[i];
  }
}

inline int sign(double v) { return (v > 0.0) - (v < 0.0); }

std::int64_t concordance_row_scalar(const double* a, const double* b, double ai, double bi,
                                    std::size_t begin, std::size_t n) {
  std::int64_t s = 0;
  for (std::size_t j = begin; j < n; ++j) s += sign(a[j] - ai) * sign(b[j] - bi);
  return s;
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{
      Backend::Scalar,       dot_scalar,          gemv_bias_scalar,       gemv_transposed_scalar,
      rank1_update_scalar,   axpy_scalar,         momentum_step_scalar,   concordance_row_scalar,
  };
  return table;
}

}  // namespace ttsnap::kernels
