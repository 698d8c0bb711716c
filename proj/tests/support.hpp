#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "otkd/geometry.hpp"
#include "otkd/sinkhorn.hpp"

namespace support {

inline std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline otkd::KeypointSet random_keypoints(std::mt19937_64& rng, std::size_t n, double lo = 0.0, double hi = 64.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<otkd::Keypoint2D> pts(n);
  for (auto& p : pts) p = {d(rng), d(rng)};
  return otkd::KeypointSet(pts);
}

inline otkd::Vec3 random_axis_angle(std::mt19937_64& rng, double maxAngle = 3.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  otkd::Vec3 axis(n(rng), n(rng), n(rng));
  axis.normalize();
  return axis * std::uniform_real_distribution<double>(0.0, maxAngle)(rng);
}

inline otkd::Pose random_pose(std::mt19937_64& rng, double depth = 5.0) {
  std::uniform_real_distribution<double> lat(-0.5, 0.5);
  return otkd::Pose::from_axis_angle(random_axis_angle(rng), otkd::Vec3(lat(rng), lat(rng), depth + lat(rng)));
}

inline std::vector<otkd::Vec3> random_points3d(std::mt19937_64& rng, std::size_t n, double half = 0.6) {
  std::uniform_real_distribution<double> d(-half, half);
  std::vector<otkd::Vec3> pts(n);
  for (auto& p : pts) p = otkd::Vec3(d(rng), d(rng), d(rng));
  return pts;
}

inline otkd::MatrixRM random_cost(std::mt19937_64& rng, int m, int n) {
  otkd::MatrixRM c(m, n);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) c(i, j) = d(rng);
  return c;
}

// max |a - b| / max(1, |b|)
inline double relative_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace support
