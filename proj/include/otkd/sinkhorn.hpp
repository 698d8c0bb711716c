#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <span>

#include "otkd/geometry.hpp"

namespace otkd {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Nonnegative finite costs; rows are student keypoints, columns teacher keypoints.
class CostMatrix {
 public:
  explicit CostMatrix(MatrixRM entries);

  Eigen::Index rows() const noexcept { return entries_.rows(); }
  Eigen::Index cols() const noexcept { return entries_.cols(); }
  const MatrixRM& entries() const noexcept { return entries_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
  double mean() const { return entries_.mean(); }

 private:
  MatrixRM entries_;
};

enum class CostKind { Euclidean, SquaredEuclidean };

// entries(i, j) = |student_i - teacher_j| (unsquared unless asked). Throws EmptySet.
CostMatrix cost_matrix(const KeypointSet& student, const KeypointSet& teacher,
                       CostKind kind = CostKind::Euclidean);

struct SinkhornConfig {
  // Absolute entropic strength; when unset, epsilonRelative * mean(cost) is used, the mean taken
  // over entries whose row and column weights are both positive.
  std::optional<double> epsilon;
  double epsilonRelative = 0.01;
  // KL penalty on both marginals. +infinity enforces them exactly (balanced OT).
  double tau = 10.0;
  int maxIters = 1000;
  // Stop once the largest change of a log-scaling between sweeps drops below tol.
  double tol = 1e-6;
  // Anneal epsilon geometrically from the cost scale down to the target.
  bool epsilonScaling = true;

  void validate() const;
  double resolve_epsilon(const CostMatrix& cost) const;
  double resolve_epsilon(const CostMatrix& cost, std::span<const double> alphaS,
                         std::span<const double> alphaT) const;
};

// Coupling between student (rows) and teacher (columns) keypoints.
struct TransportPlan {
  MatrixRM entries;
  Eigen::VectorXd rowMarginal;
  Eigen::VectorXd colMarginal;
  int iterations = 0;
  bool converged = true;     // false: iteration cap hit with residual > tol
  double residual = 0.0;     // last log-scaling change
  double epsilon = 0.0;      // entropic strength actually used

  Eigen::Index rows() const noexcept { return entries.rows(); }
  Eigen::Index cols() const noexcept { return entries.cols(); }
  double total_mass() const { return entries.sum(); }
  double transport_cost(const CostMatrix& cost) const;

  // Plan with explicit entries; marginals are recomputed.
  static TransportPlan from_entries(MatrixRM entries);
  TransportPlan transposed() const;
};

// Dual potentials (cost units) of the mass-normalized problem; reuse to warm start.
struct SinkhornPotentials {
  Eigen::VectorXd f;
  Eigen::VectorXd g;
};

// Entropic unbalanced OT, log-domain. Minimizes
//   <P, C> + eps * sum(P log P - P) + tau * KL(P 1 | a) + tau * KL(P^T 1 | b)
// on marginals rescaled by s = sqrt(sum a * sum b); the returned plan is scaled back by s,
// which makes the solution positively homogeneous in (a, b).
TransportPlan sinkhorn_unbalanced(const CostMatrix& cost, std::span<const double> alphaS,
                                  std::span<const double> alphaT, const SinkhornConfig& cfg,
                                  SinkhornPotentials* warm = nullptr);

struct PlanResiduals {
  double row = 0.0;
  double col = 0.0;
};

// L1 distance between realized and target marginals. Throws DimensionMismatch.
PlanResiduals plan_residuals(const TransportPlan& plan, std::span<const double> alphaS,
                             std::span<const double> alphaT);

// Value of the regularized objective the solver minimizes, evaluated at `plan`.
double transport_objective(const TransportPlan& plan, const CostMatrix& cost,
                           std::span<const double> alphaS, std::span<const double> alphaT,
                           const SinkhornConfig& cfg);

void write_plan_csv(std::ostream& out, const TransportPlan& plan);

}  // namespace otkd
