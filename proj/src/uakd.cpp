#include "otkd/uakd.hpp"

#include <cmath>
#include <vector>

#include "otkd/error.hpp"
#include "otkd/uncertainty.hpp"

namespace otkd {

namespace {

void check_plan_shape(const TransportPlan& plan, const KeypointSet& student, const KeypointSet& teacher) {
  if (plan.rows() != static_cast<Eigen::Index>(student.size()) ||
      plan.cols() != static_cast<Eigen::Index>(teacher.size())) {
    fail(ErrorCode::DimensionMismatch, "plan shape must be |student| x |teacher|");
  }
}

}  // namespace

double plan_weighted_distance(const TransportPlan& plan, const KeypointSet& student,
                              const KeypointSet& teacher) {
  check_plan_shape(plan, student, teacher);
  double loss = 0.0;
  for (std::size_t i = 0; i < student.size(); ++i) {
    for (std::size_t j = 0; j < teacher.size(); ++j) {
      const double dx = student[i].x - teacher[j].x;
      const double dy = student[i].y - teacher[j].y;
      loss += plan.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * std::sqrt(dx * dx + dy * dy);
    }
  }
  return loss;
}

Eigen::MatrixX2d plan_weighted_distance_gradient(const TransportPlan& plan, const KeypointSet& student,
                                                 const KeypointSet& teacher) {
  check_plan_shape(plan, student, teacher);
  Eigen::MatrixX2d grad = Eigen::MatrixX2d::Zero(static_cast<Eigen::Index>(student.size()), 2);
  for (std::size_t i = 0; i < student.size(); ++i) {
    for (std::size_t j = 0; j < teacher.size(); ++j) {
      const double dx = student[i].x - teacher[j].x;
      const double dy = student[i].y - teacher[j].y;
      const double dist = std::sqrt(dx * dx + dy * dy);
      if (dist < 1e-12) continue;
      const double w = plan.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / dist;
      grad(static_cast<Eigen::Index>(i), 0) += w * dx;
      grad(static_cast<Eigen::Index>(i), 1) += w * dy;
    }
  }
  return grad;
}

PredictionLossResult prediction_loss(const KeypointSet& student, const KeypointSet& teacher,
                                     std::span<const double> alphaS, std::span<const double> alphaT,
                                     const SinkhornConfig& cfg, SinkhornPotentials* warm) {
  if (alphaS.size() != student.size() || alphaT.size() != teacher.size()) {
    fail(ErrorCode::DimensionMismatch, "weight vectors must match the keypoint sets");
  }
  const CostMatrix cost = cost_matrix(student, teacher);
  PredictionLossResult result;
  result.plan = sinkhorn_unbalanced(cost, alphaS, alphaT, cfg, warm);
  result.loss = result.plan.transport_cost(cost);
  result.gradient = plan_weighted_distance_gradient(result.plan, student, teacher);
  return result;
}

PredictionLossResult uniform_ot_baseline_loss(const KeypointSet& student, const KeypointSet& teacher,
                                              std::optional<std::span<const double>> existence,
                                              const SinkhornConfig& cfg, SinkhornPotentials* warm) {
  const std::vector<double> alpha_s = student_uniform_weights(student.size());
  std::vector<double> alpha_t;
  if (existence) {
    alpha_t.assign(existence->begin(), existence->end());
  } else {
    alpha_t.assign(teacher.size(), 1.0 / static_cast<double>(teacher.size()));
  }
  return prediction_loss(student, teacher, alpha_s, alpha_t, cfg, warm);
}

}  // namespace otkd
