#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>

#include "otkd/geometry.hpp"
#include "otkd/sinkhorn.hpp"

namespace otkd {

struct PredictionLossResult {
  double loss = 0.0;           // pixels
  TransportPlan plan;          // student rows, teacher columns
  Eigen::MatrixX2d gradient;   // d loss / d (x, y) of each student keypoint, plan held fixed
};

// sum_ij plan_ij |s_i - t_j| for a given plan.
double plan_weighted_distance(const TransportPlan& plan, const KeypointSet& student,
                              const KeypointSet& teacher);

// Gradient of plan_weighted_distance w.r.t. the student keypoints. Pairs closer than 1e-12
// contribute the zero subgradient.
Eigen::MatrixX2d plan_weighted_distance_gradient(const TransportPlan& plan, const KeypointSet& student,
                                                 const KeypointSet& teacher);

// Solves the unbalanced OT problem between the sets, then evaluates the transport loss and
// its gradient with the plan detached.
PredictionLossResult prediction_loss(const KeypointSet& student, const KeypointSet& teacher,
                                     std::span<const double> alphaS, std::span<const double> alphaT,
                                     const SinkhornConfig& cfg, SinkhornPotentials* warm = nullptr);

// Existence-only weighting: alphaS = 1/M, alphaT = existence (1/N each when absent).
PredictionLossResult uniform_ot_baseline_loss(const KeypointSet& student, const KeypointSet& teacher,
                                              std::optional<std::span<const double>> existence,
                                              const SinkhornConfig& cfg,
                                              SinkhornPotentials* warm = nullptr);

}  // namespace otkd
