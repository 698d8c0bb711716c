#pragma once

#include <cstddef>
#include <span>

// Data-parallel inner loops shared by the solvers and the toy networks.
// Every kernel has a scalar reference; vector variants are selected once at
// startup and must agree with the reference to within rounding.
namespace otkd::simd {

struct KernelTable {
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum (a - b)^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // log sum_j exp(offset[j] - cost[j] * inv_eps); -inf entries in offset contribute nothing.
  double (*log_sum_exp_affine)(const double* offset, const double* cost, double inv_eps,
                               std::size_t n);
  // out[j] = exp(base + offset[j] - cost[j] * inv_eps)
  void (*exp_affine)(double base, const double* offset, const double* cost, double inv_eps,
                     double* out, std::size_t n);
  // out[j] = exp(x[j] - shift); returns sum of out.
  double (*exp_shift_sum)(const double* x, double shift, double* out, std::size_t n);
  // out[j] = |(px, py) - (xs[j], ys[j])|, or its square.
  void (*distance_row)(double px, double py, const double* xs, const double* ys, double* out,
                       std::size_t n, bool squared);
};

const KernelTable& scalar_kernels();

// nullptr when the build has no AVX2 variant or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

// Chosen on first use. OTKD_SIMD=scalar forces the reference kernels.
const KernelTable& active_kernels();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active_kernels().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active_kernels().axpy(alpha, x.data(), y.data(), x.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active_kernels().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace otkd::simd
