// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "ttsnap/kernels.hpp"

namespace ttsnap::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemv_bias_avx2(const double* w, const double* bias, const double* x, double* y,
                    std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = bias[r] + dot_avx2(w + r * cols, x, cols);
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_transposed_avx2(const double* w, const double* delta, double* y, std::size_t rows,
                          std::size_t cols) {
  for (std::size_t c = 0; c < cols; ++c) y[c] = 0.0;
  for (std::size_t r = 0; r < rows; ++r) axpy_avx2(delta[r], w + r * cols, y, cols);
}

void rank1_update_avx2(double* w, const double* delta, const double* x, std::size_t rows,
                       std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_avx2(delta[r], x, w + r * cols, cols);
}

void momentum_step_avx2(double* params, double* velocity, const double* grad, double lr,
                        double momentum, std::size_t n) {
  const __m256d vm = _mm256_set1_pd(momentum);
  const __m256d vlr = _mm256_set1_pd(-lr);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_mul_pd(vm, _mm256_loadu_pd(velocity + i));
    v = _mm256_fmadd_pd(vlr, _mm256_loadu_pd(grad + i), v);
    _mm256_storeu_pd(velocity + i, v);
    _mm256_storeu_pd(params + i, _mm256_add_pd(_mm256_loadu_pd(params + i), v));
  }
  for (; i < n; ++i) {
    velocity[i] = momentum * velocity[i] - lr * grad[i];
    params[i] += velocity[i];
  }
}

// Comparison masks are all-ones (-1 as int64) where true, so lt - gt is the
// sign; the product of two signs fits in the low 32 bits of each lane.
inline __m256i sign_epi64(__m256d v, __m256d zero) {
  const __m256i gt = _mm256_castpd_si256(_mm256_cmp_pd(v, zero, _CMP_GT_OQ));
  const __m256i lt = _mm256_castpd_si256(_mm256_cmp_pd(v, zero, _CMP_LT_OQ));
  return _mm256_sub_epi64(lt, gt);
}

std::int64_t concordance_row_avx2(const double* a, const double* b, double ai, double bi,
                                  std::size_t begin, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d va = _mm256_set1_pd(ai);
  const __m256d vb = _mm256_set1_pd(bi);
  __m256i acc = _mm256_setzero_si256();
  std::size_t j = begin;
  for (; j + 4 <= n; j += 4) {
    const __m256i sa = sign_epi64(_mm256_sub_pd(_mm256_loadu_pd(a + j), va), zero);
    const __m256i sb = sign_epi64(_mm256_sub_pd(_mm256_loadu_pd(b + j), vb), zero);
    acc = _mm256_add_epi64(acc, _mm256_mul_epi32(sa, sb));
  }
  alignas(32) std::int64_t lanes[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), acc);
  std::int64_t s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; j < n; ++j) {
    const double da = a[j] - ai;
    const double db = b[j] - bi;
    s += ((da > 0.0) - (da < 0.0)) * ((db > 0.0) - (db < 0.0));
  }
  return s;
}

}  // namespace

const KernelTable& avx2_table_impl() noexcept {
  static const KernelTable table{
      Backend::Avx2,     dot_avx2,           gemv_bias_avx2,       gemv_transposed_avx2,
      rank1_update_avx2, axpy_avx2,          momentum_step_avx2,   concordance_row_avx2,
  };
  return table;
}

}  // namespace ttsnap::kernels
