#include "otkd/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <vector>

#include "otkd/error.hpp"
#include "otkd/log.hpp"
#include "otkd/numfmt.hpp"
#include "otkd/simd/kernels.hpp"

namespace otkd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double validated_mass(std::span<const double> weights, const char* name) {
  double mass = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) fail(ErrorCode::InvalidArgument, std::string(name) + " contains a non-finite weight");
    if (w < 0.0) fail(ErrorCode::NegativeWeight, std::string(name) + " contains a negative weight");
    mass += w;
  }
  if (!(mass > 0.0)) fail(ErrorCode::InvalidArgument, std::string(name) + " must not be all zero");
  return mass;
}

double kl_divergence(const Eigen::VectorXd& p, std::span<const double> q) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double qi = q[static_cast<std::size_t>(i)];
    if (p[i] > 0.0) {
      if (qi <= 0.0) return kInf;
      total += p[i] * std::log(p[i] / qi) - p[i] + qi;
    } else {
      total += qi;
    }
  }
  return total;
}

}  // namespace

CostMatrix::CostMatrix(MatrixRM entries) : entries_(std::move(entries)) {
  if (entries_.rows() == 0 || entries_.cols() == 0) fail(ErrorCode::EmptySet, "cost matrix is empty");
  if (!entries_.allFinite()) fail(ErrorCode::InvalidArgument, "cost matrix entries must be finite");
  if (entries_.minCoeff() < 0.0) fail(ErrorCode::InvalidArgument, "cost matrix entries must be >= 0");
}

CostMatrix cost_matrix(const KeypointSet& student, const KeypointSet& teacher, CostKind kind) {
  if (student.empty() || teacher.empty()) fail(ErrorCode::EmptySet, "keypoint sets must be non-empty");
  const auto m = static_cast<Eigen::Index>(student.size());
  const auto n = static_cast<Eigen::Index>(teacher.size());
  std::vector<double> tx(teacher.size()), ty(teacher.size());
  for (std::size_t j = 0; j < teacher.size(); ++j) {
    tx[j] = teacher[j].x;
    ty[j] = teacher[j].y;
  }
  MatrixRM entries(m, n);
  const auto& kernels = simd::active_kernels();
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& p = student[static_cast<std::size_t>(i)];
    kernels.distance_row(p.x, p.y, tx.data(), ty.data(), entries.row(i).data(), teacher.size(),
                         kind == CostKind::SquaredEuclidean);
  }
  return CostMatrix(std::move(entries));
}

void SinkhornConfig::validate() const {
  if (epsilon && !(*epsilon > 0.0 && std::isfinite(*epsilon))) {
    fail(ErrorCode::InvalidArgument, "epsilon must be positive and finite");
  }
  if (!(epsilonRelative > 0.0 && std::isfinite(epsilonRelative))) {
    fail(ErrorCode::InvalidArgument, "epsilonRelative must be positive and finite");
  }
  if (!(tau > 0.0)) fail(ErrorCode::InvalidArgument, "tau must be positive");
  if (maxIters < 1) fail(ErrorCode::InvalidArgument, "maxIters must be positive");
  if (!(tol > 0.0)) fail(ErrorCode::InvalidArgument, "tol must be positive");
}

double SinkhornConfig::resolve_epsilon(const CostMatrix& cost) const {
  if (epsilon) return *epsilon;
  const double mean = cost.mean();
  // All-zero costs have no scale; fall back to the relative factor itself.
  return mean > 0.0 ? epsilonRelative * mean : epsilonRelative;
}

double SinkhornConfig::resolve_epsilon(const CostMatrix& cost, std::span<const double> alphaS,
                                       std::span<const double> alphaT) const {
  if (epsilon) return *epsilon;
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    if (!(alphaS[static_cast<std::size_t>(i)] > 0.0)) continue;
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      if (!(alphaT[static_cast<std::size_t>(j)] > 0.0)) continue;
      sum += cost(i, j);
      ++count;
    }
  }
  const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
  return mean > 0.0 ? epsilonRelative * mean : epsilonRelative;
}

double TransportPlan::transport_cost(const CostMatrix& cost) const {
  if (cost.rows() != rows() || cost.cols() != cols()) {
    fail(ErrorCode::DimensionMismatch, "plan and cost shapes differ");
  }
  return entries.cwiseProduct(cost.entries()).sum();
}

TransportPlan TransportPlan::from_entries(MatrixRM values) {
  if (!values.allFinite() || (values.size() > 0 && values.minCoeff() < 0.0)) {
    fail(ErrorCode::InvalidArgument, "plan entries must be finite and nonnegative");
  }
  TransportPlan plan;
  plan.entries = std::move(values);
  plan.rowMarginal = plan.entries.rowwise().sum();
  plan.colMarginal = plan.entries.colwise().sum().transpose();
  return plan;
}

TransportPlan TransportPlan::transposed() const {
  TransportPlan t = *this;
  t.entries = entries.transpose();
  t.rowMarginal = colMarginal;
  t.colMarginal = rowMarginal;
  return t;
}

TransportPlan sinkhorn_unbalanced(const CostMatrix& cost, std::span<const double> alphaS,
                                  std::span<const double> alphaT, const SinkhornConfig& cfg,
                                  SinkhornPotentials* warm) {
  cfg.validate();
  const Eigen::Index m = cost.rows();
  const Eigen::Index n = cost.cols();
  if (static_cast<Eigen::Index>(alphaS.size()) != m || static_cast<Eigen::Index>(alphaT.size()) != n) {
    fail(ErrorCode::DimensionMismatch, "marginal lengths must match the cost matrix");
  }
  const double mass_s = validated_mass(alphaS, "alphaS");
  const double mass_t = validated_mass(alphaT, "alphaT");
  const double scale = std::sqrt(mass_s * mass_t);

  Eigen::VectorXd log_a(m), log_b(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double a = alphaS[static_cast<std::size_t>(i)] / scale;
    log_a[i] = a > 0.0 ? std::log(a) : -kInf;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const double b = alphaT[static_cast<std::size_t>(j)] / scale;
    log_b[j] = b > 0.0 ? std::log(b) : -kInf;
  }

  const MatrixRM& c = cost.entries();
  const MatrixRM ct = c.transpose();
  const double target_eps = cfg.resolve_epsilon(cost, alphaS, alphaT);
  const bool balanced = std::isinf(cfg.tau);

  Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  const bool warm_started = warm != nullptr && warm->f.size() == m && warm->g.size() == n;
  if (warm_started) {
    f = warm->f;
    g = warm->g;
  }

  // Stage schedule: eps_k = max(target, c_max / 2^k). A warm start skips the annealing.
  std::vector<double> schedule;
  if (cfg.epsilonScaling && !warm_started) {
    double c_max = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!std::isfinite(log_a[i])) continue;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (std::isfinite(log_b[j])) c_max = std::max(c_max, c(i, j));
      }
    }
    for (double e = c_max; e > target_eps; e *= 0.5) schedule.push_back(e);
  }
  schedule.push_back(target_eps);

  const auto& kernels = simd::active_kernels();
  Eigen::VectorXd offset_g(n), offset_f(m);
  int iterations = 0;
  bool converged = false;
  double change = kInf;

  for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
    const double eps = schedule[stage];
    const bool final_stage = stage + 1 == schedule.size();
    const double rho = balanced ? 1.0 : cfg.tau / (cfg.tau + eps);
    const double inv_eps = 1.0 / eps;
    const double stage_tol = final_stage ? cfg.tol : std::max(cfg.tol, 1e-3);
    const int stage_cap = final_stage ? cfg.maxIters - iterations : 50;
    if (stage_cap <= 0) break;

    for (int it = 0; it < stage_cap; ++it) {
      ++iterations;
      change = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) offset_g[j] = g[j] * inv_eps;
      for (Eigen::Index i = 0; i < m; ++i) {
        double updated = -kInf;
        if (std::isfinite(log_a[i])) {
          const double lse = kernels.log_sum_exp_affine(offset_g.data(), c.row(i).data(), inv_eps,
                                                        static_cast<std::size_t>(n));
          updated = rho * eps * (log_a[i] - lse);
        }
        if (std::isfinite(updated) && std::isfinite(f[i])) {
          change = std::max(change, std::abs(updated - f[i]) * inv_eps);
        }
        f[i] = updated;
      }
      for (Eigen::Index i = 0; i < m; ++i) offset_f[i] = f[i] * inv_eps;
      for (Eigen::Index j = 0; j < n; ++j) {
        double updated = -kInf;
        if (std::isfinite(log_b[j])) {
          const double lse = kernels.log_sum_exp_affine(offset_f.data(), ct.row(j).data(), inv_eps,
                                                        static_cast<std::size_t>(m));
          updated = rho * eps * (log_b[j] - lse);
        }
        if (std::isfinite(updated) && std::isfinite(g[j])) {
          change = std::max(change, std::abs(updated - g[j]) * inv_eps);
        }
        g[j] = updated;
      }
      if (!std::isfinite(change)) {
        fail(ErrorCode::InvalidArgument, "Sinkhorn potentials became non-finite");
      }
      if (change < stage_tol) {
        if (final_stage) converged = true;
        break;
      }
    }
  }

  const double inv_eps = 1.0 / target_eps;
  for (Eigen::Index j = 0; j < n; ++j) offset_g[j] = g[j] * inv_eps;
  MatrixRM entries(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!std::isfinite(f[i])) {
      entries.row(i).setZero();
      continue;
    }
    kernels.exp_affine(f[i] * inv_eps, offset_g.data(), c.row(i).data(), inv_eps,
                       entries.row(i).data(), static_cast<std::size_t>(n));
  }
  entries *= scale;

  TransportPlan plan = TransportPlan::from_entries(std::move(entries));
  plan.iterations = iterations;
  plan.converged = converged;
  plan.residual = change;
  plan.epsilon = target_eps;
  if (!converged) {
    log::debug("sinkhorn: no convergence after ", iterations, " iterations (residual ", change, ")");
  }
  if (warm != nullptr) {
    warm->f = f;
    warm->g = g;
  }
  return plan;
}

PlanResiduals plan_residuals(const TransportPlan& plan, std::span<const double> alphaS,
                             std::span<const double> alphaT) {
  if (static_cast<Eigen::Index>(alphaS.size()) != plan.rows() ||
      static_cast<Eigen::Index>(alphaT.size()) != plan.cols()) {
    fail(ErrorCode::DimensionMismatch, "marginal lengths must match the plan");
  }
  PlanResiduals r;
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    r.row += std::abs(plan.rowMarginal[i] - alphaS[static_cast<std::size_t>(i)]);
  }
  for (Eigen::Index j = 0; j < plan.cols(); ++j) {
    r.col += std::abs(plan.colMarginal[j] - alphaT[static_cast<std::size_t>(j)]);
  }
  return r;
}

double transport_objective(const TransportPlan& plan, const CostMatrix& cost,
                           std::span<const double> alphaS, std::span<const double> alphaT,
                           const SinkhornConfig& cfg) {
  cfg.validate();
  if (static_cast<Eigen::Index>(alphaS.size()) != plan.rows() ||
      static_cast<Eigen::Index>(alphaT.size()) != plan.cols()) {
    fail(ErrorCode::DimensionMismatch, "marginal lengths must match the plan");
  }
  const double scale = std::sqrt(validated_mass(alphaS, "alphaS") * validated_mass(alphaT, "alphaT"));
  const double eps = cfg.resolve_epsilon(cost, alphaS, alphaT);
  const MatrixRM p = plan.entries / scale;

  double value = p.cwiseProduct(cost.entries()).sum();
  double entropy = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double v = p.data()[k];
    if (v > 0.0) entropy += v * std::log(v) - v;
  }
  value += eps * entropy;
  if (!std::isinf(cfg.tau)) {
    std::vector<double> a(alphaS.size()), b(alphaT.size());
    std::transform(alphaS.begin(), alphaS.end(), a.begin(), [&](double w) { return w / scale; });
    std::transform(alphaT.begin(), alphaT.end(), b.begin(), [&](double w) { return w / scale; });
    const Eigen::VectorXd rows = p.rowwise().sum();
    const Eigen::VectorXd cols = p.colwise().sum().transpose();
    value += cfg.tau * (kl_divergence(rows, a) + kl_divergence(cols, b));
  }
  return scale * value;
}

void write_plan_csv(std::ostream& out, const TransportPlan& plan) {
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_real(plan.entries(i, j));
    }
    out << '\n';
  }
}

}  // namespace otkd
