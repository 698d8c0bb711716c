#pragma once

#include <optional>
#include <vector>

#include "otkd/geometry.hpp"

namespace otkd {

// 2D-3D matches under one camera; weights (>= 0) scale each squared residual.
struct Correspondences {
  KeypointSet points2d;
  std::vector<Vec3> points3d;
  CameraIntrinsics cam;
  std::optional<std::vector<double>> weights;

  // Throws DimensionMismatch, NegativeWeight, InsufficientCorrespondences (< 6 matches).
  void validate() const;
};

struct PnpResult {
  Pose pose;
  double rms = 0.0;       // reprojection RMS in pixels
  int iterations = 0;
  bool converged = false;
};

// Linear initialization (DLT, or a plane homography for coplanar models) followed by
// Gauss-Newton on the weighted reprojection error with left axis-angle updates.
// Throws DegenerateConfiguration for collinear models; non-convergence is reported in the result.
PnpResult pnp_solve(const Correspondences& c, int maxIters = 100, double tol = 1e-10);

// Weighted when weights are present. Throws PointBehindCamera.
double reprojection_rms(const Correspondences& c, const Pose& pose);

}  // namespace otkd
