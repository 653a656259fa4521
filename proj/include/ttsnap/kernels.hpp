#pragma once

// Data-parallel inner loops used by the verifier network, its optimizer and
// the rank-correlation code. Each kernel has a scalar reference version and,
// on x86-64, an AVX2/FMA version. The active table is chosen once at startup
// from CPU features; TTSNAP_KERNELS=scalar forces the reference path.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace ttsnap::kernels {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  Backend backend;

  double (*dot)(const double* a, const double* b, std::size_t n);

  // y[r] = bias[r] + sum_c w[r * cols + c] * x[c]
  void (*gemv_bias)(const double* w, const double* bias, const double* x, double* y,
                    std::size_t rows, std::size_t cols);

  // y[c] = sum_r w[r * cols + c] * delta[r]
  void (*gemv_transposed)(const double* w, const double* delta, double* y, std::size_t rows,
                          std::size_t cols);

  // w[r * cols + c] += delta[r] * x[c]
  void (*rank1_update)(double* w, const double* delta, const double* x, std::size_t rows,
                       std::size_t cols);

  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // velocity = momentum * velocity - lr * grad; params += velocity
  void (*momentum_step)(double* params, double* velocity, const double* grad, double lr,
                        double momentum, std::size_t n);

  // Sum over j in [begin, n) of sign(a[j] - ai) * sign(b[j] - bi).
  std::int64_t (*concordance_row)(const double* a, const double* b, double ai, double bi,
                                  std::size_t begin, std::size_t n);
};

const KernelTable& scalar_table() noexcept;

// Null when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table() noexcept;

const KernelTable& active() noexcept;

// Overrides the runtime choice. Returns false if the backend is unavailable.
bool select(Backend backend) noexcept;

std::string_view name(Backend backend) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace ttsnap::kernels
