// Compiled with -mavx2 -mfma. No inline library templates in here: an AVX-encoded
// copy of a shared symbol could be picked by the linker for the whole program.
#include <immintrin.h>

#include <cmath>

#include "otkd/simd/kernels.hpp"

namespace otkd::simd {
namespace detail {
const KernelTable& avx2_table();
}

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  const __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  const __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, swapped));
}

// exp(x) for four doubles: range reduction by ln2, degree-13 Taylor on
// |r| <= ln2/2, exponent reconstruction by bit manipulation. Inputs below
// -708.39 flush to zero (no subnormals), above 709 saturate to +inf.
inline __m256d exp_pd(__m256d x) {
  const __m256d lo_limit = _mm256_set1_pd(-708.39);
  const __m256d hi_limit = _mm256_set1_pd(709.0);
  const __m256d underflow = _mm256_cmp_pd(x, lo_limit, _CMP_LT_OQ);
  const __m256d overflow = _mm256_cmp_pd(x, hi_limit, _CMP_GT_OQ);
  const __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);

  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo_limit), hi_limit);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125e-1), xc);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212e-6), r);

  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  const __m128i n32 = _mm256_cvtpd_epi32(n);
  const __m256i n64 = _mm256_cvtepi32_epi64(n32);
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
  __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));

  result = _mm256_blendv_pd(result, _mm256_setzero_pd(), underflow);
  result = _mm256_blendv_pd(result, _mm256_set1_pd(HUGE_VAL), overflow);
  result = _mm256_blendv_pd(result, x, nan_mask);
  return result;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double squared_distance_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double total = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    total += d * d;
  }
  return total;
}

double log_sum_exp_affine_avx2(const double* offset, const double* cost, double inv_eps,
                               std::size_t n) {
  const __m256d scale = _mm256_set1_pd(inv_eps);
  __m256d vpeak = _mm256_set1_pd(-HUGE_VAL);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_fnmadd_pd(_mm256_loadu_pd(cost + i), scale, _mm256_loadu_pd(offset + i));
    vpeak = _mm256_max_pd(vpeak, v);
  }
  double peak = hmax(vpeak);
  for (std::size_t j = i; j < n; ++j) {
    const double v = offset[j] - cost[j] * inv_eps;
    if (v > peak) peak = v;
  }
  if (!std::isfinite(peak)) return peak;

  const __m256d shift = _mm256_set1_pd(peak);
  __m256d acc = _mm256_setzero_pd();
  for (i = 0; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_fnmadd_pd(_mm256_loadu_pd(cost + i), scale, _mm256_loadu_pd(offset + i));
    acc = _mm256_add_pd(acc, exp_pd(_mm256_sub_pd(v, shift)));
  }
  double total = hsum(acc);
  for (; i < n; ++i) total += std::exp(offset[i] - cost[i] * inv_eps - peak);
  return peak + std::log(total);
}

void exp_affine_avx2(double base, const double* offset, const double* cost, double inv_eps,
                     double* out, std::size_t n) {
  const __m256d scale = _mm256_set1_pd(inv_eps);
  const __m256d vbase = _mm256_set1_pd(base);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_add_pd(vbase, _mm256_loadu_pd(offset + i));
    _mm256_storeu_pd(out + i, exp_pd(_mm256_fnmadd_pd(_mm256_loadu_pd(cost + i), scale, v)));
  }
  for (; i < n; ++i) out[i] = std::exp(base + offset[i] - cost[i] * inv_eps);
}

double exp_shift_sum_avx2(const double* x, double shift, double* out, std::size_t n) {
  const __m256d vshift = _mm256_set1_pd(shift);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = exp_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), vshift));
    _mm256_storeu_pd(out + i, e);
    acc = _mm256_add_pd(acc, e);
  }
  double total = hsum(acc);
  for (; i < n; ++i) {
    out[i] = std::exp(x[i] - shift);
    total += out[i];
  }
  return total;
}

void distance_row_avx2(double px, double py, const double* xs, const double* ys, double* out,
                       std::size_t n, bool squared) {
  const __m256d vx = _mm256_set1_pd(px);
  const __m256d vy = _mm256_set1_pd(py);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(vx, _mm256_loadu_pd(xs + i));
    const __m256d dy = _mm256_sub_pd(vy, _mm256_loadu_pd(ys + i));
    const __m256d d2 = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
    _mm256_storeu_pd(out + i, squared ? d2 : _mm256_sqrt_pd(d2));
  }
  for (; i < n; ++i) {
    const double dx = px - xs[i];
    const double dy = py - ys[i];
    const double d2 = dx * dx + dy * dy;
    out[i] = squared ? d2 : std::sqrt(d2);
  }
}

const KernelTable kAvx2Table{
    "avx2",
    dot_avx2,
    axpy_avx2,
    squared_distance_avx2,
    log_sum_exp_affine_avx2,
    exp_affine_avx2,
    exp_shift_sum_avx2,
    distance_row_avx2,
};

}  // namespace

const KernelTable& detail::avx2_table() { return kAvx2Table; }

}  // namespace otkd::simd
