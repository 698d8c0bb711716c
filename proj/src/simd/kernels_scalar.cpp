#include <cmath>
#include <limits>

#include "otkd/simd/kernels.hpp"

namespace otkd::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double log_sum_exp_affine_scalar(const double* offset, const double* cost, double inv_eps,
                                 std::size_t n) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = offset[i] - cost[i] * inv_eps;
    if (v > peak) peak = v;
  }
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(offset[i] - cost[i] * inv_eps - peak);
  return peak + std::log(acc);
}

void exp_affine_scalar(double base, const double* offset, const double* cost, double inv_eps,
                       double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(base + offset[i] - cost[i] * inv_eps);
}

double exp_shift_sum_scalar(const double* x, double shift, double* out, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - shift);
    acc += out[i];
  }
  return acc;
}

void distance_row_scalar(double px, double py, const double* xs, const double* ys, double* out,
                         std::size_t n, bool squared) {
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = px - xs[i];
    const double dy = py - ys[i];
    const double d2 = dx * dx + dy * dy;
    out[i] = squared ? d2 : std::sqrt(d2);
  }
}

const KernelTable kScalarTable{
    "scalar",
    dot_scalar,
    axpy_scalar,
    squared_distance_scalar,
    log_sum_exp_affine_scalar,
    exp_affine_scalar,
    exp_shift_sum_scalar,
    distance_row_scalar,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

}  // namespace otkd::simd
