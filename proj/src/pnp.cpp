#include "otkd/pnp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <limits>

#include "otkd/error.hpp"
#include "otkd/log.hpp"

namespace otkd {

void Correspondences::validate() const {
  if (points2d.size() != points3d.size()) {
    fail(ErrorCode::DimensionMismatch, std::to_string(points2d.size()) + " image points but " +
                                           std::to_string(points3d.size()) + " model points");
  }
  if (weights) {
    if (weights->size() != points3d.size()) fail(ErrorCode::DimensionMismatch, "weight count differs from points");
    for (double w : *weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::NegativeWeight, "correspondence weights must be >= 0");
    }
  }
  if (points3d.size() < 6) {
    fail(ErrorCode::InsufficientCorrespondences,
         "need at least 6 correspondences, got " + std::to_string(points3d.size()));
  }
}

namespace {

double weight_of(const Correspondences& c, std::size_t i) { return c.weights ? (*c.weights)[i] : 1.0; }

Vec2 normalized_image_point(const Correspondences& c, std::size_t i) {
  return Vec2((c.points2d[i].x - c.cam.cx) / c.cam.fx, (c.points2d[i].y - c.cam.cy) / c.cam.fy);
}

struct Similarity2 {
  Vec2 center = Vec2::Zero();
  double scale = 1.0;
  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
    t(0, 0) = t(1, 1) = scale;
    t.block<2, 1>(0, 2) = -scale * center;
    return t;
  }
};

// Weighted centroid and scaling to mean distance sqrt(2) from it.
Similarity2 normalizer2(const std::vector<Vec2>& pts, const std::vector<double>& w) {
  Similarity2 s;
  double total = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    s.center += w[i] * pts[i];
    total += w[i];
  }
  s.center /= total;
  double spread = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) spread += w[i] * (pts[i] - s.center).norm();
  spread /= total;
  s.scale = spread > 0.0 ? std::sqrt(2.0) / spread : 1.0;
  return s;
}

struct ModelFrame {
  Vec3 centroid;
  Mat3 axes;          // principal directions as columns, right-handed
  Vec3 singular;      // descending
  double spread;      // weighted mean distance to centroid
};

ModelFrame model_frame(const Correspondences& c) {
  ModelFrame frame;
  frame.centroid.setZero();
  double total = 0.0;
  for (std::size_t i = 0; i < c.points3d.size(); ++i) {
    frame.centroid += weight_of(c, i) * c.points3d[i];
    total += weight_of(c, i);
  }
  if (!(total > 0.0)) fail(ErrorCode::DegenerateConfiguration, "all correspondence weights are zero");
  frame.centroid /= total;
  Eigen::MatrixX3d centered(static_cast<Eigen::Index>(c.points3d.size()), 3);
  frame.spread = 0.0;
  for (std::size_t i = 0; i < c.points3d.size(); ++i) {
    const Vec3 d = c.points3d[i] - frame.centroid;
    centered.row(static_cast<Eigen::Index>(i)) = std::sqrt(weight_of(c, i)) * d.transpose();
    frame.spread += weight_of(c, i) * d.norm();
  }
  frame.spread /= total;
  Eigen::JacobiSVD<Eigen::MatrixX3d> svd(centered, Eigen::ComputeFullV);
  frame.singular = svd.singularValues();
  frame.axes = svd.matrixV();
  if (frame.axes.determinant() < 0.0) frame.axes.col(2) *= -1.0;
  return frame;
}

Pose pose_from_camera_matrix(Eigen::Matrix<double, 3, 4> p) {
  Mat3 m = p.leftCols<3>();
  if (m.determinant() < 0.0) {
    p = -p;
    m = -m;
  }
  const Eigen::JacobiSVD<Mat3> svd(m);
  const double scale = svd.singularValues().mean();
  if (!(scale > 0.0)) fail(ErrorCode::DegenerateConfiguration, "linear pose estimate is rank deficient");
  return Pose(project_to_so3(m / scale), p.col(3) / scale);
}

Pose dlt_init(const Correspondences& c, const ModelFrame& frame) {
  const std::size_t n = c.points3d.size();
  std::vector<Vec2> img(n);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    img[i] = normalized_image_point(c, i);
    w[i] = weight_of(c, i);
  }
  const Similarity2 t2 = normalizer2(img, w);
  const double s3 = frame.spread > 0.0 ? std::sqrt(3.0) / frame.spread : 1.0;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), 12);
  for (std::size_t i = 0; i < n; ++i) {
    const double sw = std::sqrt(w[i]);
    const Vec3 x = s3 * (c.points3d[i] - frame.centroid);
    const Eigen::Vector4d xh(x.x(), x.y(), x.z(), 1.0);
    const Vec2 u = t2.scale * (img[i] - t2.center);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.block<1, 4>(r, 0) = sw * xh.transpose();
    a.block<1, 4>(r, 8) = -sw * u.x() * xh.transpose();
    a.block<1, 4>(r + 1, 4) = sw * xh.transpose();
    a.block<1, 4>(r + 1, 8) = -sw * u.y() * xh.transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd v = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> pn;
  pn << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8), v(9), v(10), v(11);

  Eigen::Matrix4d t3 = Eigen::Matrix4d::Identity();
  t3.topLeftCorner<3, 3>() *= s3;
  t3.block<3, 1>(0, 3) = -s3 * frame.centroid;
  const Eigen::Matrix<double, 3, 4> p = t2.matrix().inverse() * pn * t3;
  return pose_from_camera_matrix(p);
}

Pose planar_init(const Correspondences& c, const ModelFrame& frame) {
  const std::size_t n = c.points3d.size();
  std::vector<Vec2> img(n);
  std::vector<Vec2> plane(n);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    img[i] = normalized_image_point(c, i);
    const Vec3 d = c.points3d[i] - frame.centroid;
    plane[i] = Vec2(frame.axes.col(0).dot(d), frame.axes.col(1).dot(d));
    w[i] = weight_of(c, i);
  }
  const Similarity2 ti = normalizer2(img, w);
  const Similarity2 tp = normalizer2(plane, w);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double sw = std::sqrt(w[i]);
    const Vec2 q = tp.scale * (plane[i] - tp.center);
    const Eigen::Vector3d qh(q.x(), q.y(), 1.0);
    const Vec2 u = ti.scale * (img[i] - ti.center);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.block<1, 3>(r, 0) = sw * qh.transpose();
    a.block<1, 3>(r, 6) = -sw * u.x() * qh.transpose();
    a.block<1, 3>(r + 1, 3) = sw * qh.transpose();
    a.block<1, 3>(r + 1, 6) = -sw * u.y() * qh.transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd v = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  Eigen::Matrix3d h = ti.matrix().inverse() * hn * tp.matrix();

  const double lambda = 0.5 * (h.col(0).norm() + h.col(1).norm());
  if (!(lambda > 0.0)) fail(ErrorCode::DegenerateConfiguration, "plane homography is rank deficient");
  h /= lambda;
  if (h(2, 2) < 0.0) h = -h;
  Mat3 b;
  b.col(0) = h.col(0);
  b.col(1) = h.col(1);
  b.col(2) = h.col(0).cross(h.col(1));
  const Mat3 rotation = project_to_so3(b * frame.axes.transpose());
  return Pose(rotation, h.col(2) - rotation * frame.centroid);
}

constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Weighted sum of squared pixel residuals; +inf if a weighted point is not in front of the camera.
double weighted_cost(const Correspondences& c, const Pose& pose) {
  double cost = 0.0;
  for (std::size_t i = 0; i < c.points3d.size(); ++i) {
    if (weight_of(c, i) == 0.0) continue;
    const Vec3 p = pose.apply(c.points3d[i]);
    if (!(p.z() > 0.0)) return kInfinity;
    const double du = c.cam.fx * p.x() / p.z() + c.cam.cx - c.points2d[i].x;
    const double dv = c.cam.fy * p.y() / p.z() + c.cam.cy - c.points2d[i].y;
    cost += weight_of(c, i) * (du * du + dv * dv);
  }
  return cost;
}

// Least-squares translation for a fixed rotation: x_n (r3.X + tz) = r1.X + tx, same for y.
Vec3 translation_for_rotation(const Correspondences& c, const Mat3& rotation) {
  Mat3 ata = Mat3::Zero();
  Vec3 atb = Vec3::Zero();
  for (std::size_t i = 0; i < c.points3d.size(); ++i) {
    const double w = weight_of(c, i);
    if (w == 0.0) continue;
    const Vec2 xn = normalized_image_point(c, i);
    const Vec3 rx = rotation * c.points3d[i];
    const Vec3 ax(1.0, 0.0, -xn.x());
    const Vec3 ay(0.0, 1.0, -xn.y());
    ata += w * (ax * ax.transpose() + ay * ay.transpose());
    atb += w * (ax * (xn.x() * rx.z() - rx.x()) + ay * (xn.y() * rx.z() - rx.y()));
  }
  return ata.ldlt().solve(atb);
}

// Model centroid on the mean viewing ray, at the depth where its spread matches the image spread.
Vec3 fallback_translation(const Correspondences& c, const ModelFrame& frame, const Mat3& rotation) {
  Vec2 mean = Vec2::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < c.points3d.size(); ++i) {
    mean += weight_of(c, i) * normalized_image_point(c, i);
    total += weight_of(c, i);
  }
  mean /= total;
  double spread = 0.0;
  for (std::size_t i = 0; i < c.points3d.size(); ++i) spread += weight_of(c, i) * (normalized_image_point(c, i) - mean).norm();
  spread /= total;
  const double depth = spread > 0.0 ? frame.spread / spread : 1.0;
  return depth * Vec3(mean.x(), mean.y(), 1.0) - rotation * frame.centroid;
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

}  // namespace

PnpResult pnp_solve(const Correspondences& c, int maxIters, double tol) {
  c.validate();
  if (maxIters < 0 || !(tol > 0.0)) fail(ErrorCode::InvalidArgument, "maxIters must be >= 0 and tol > 0");

  const ModelFrame frame = model_frame(c);
  const double largest = frame.singular(0);
  if (!(largest > 0.0) || frame.singular(1) <= 1e-9 * largest) {
    fail(ErrorCode::DegenerateConfiguration, "model points are collinear");
  }
  const bool planar = frame.singular(2) <= 1e-9 * largest;
  Pose pose = planar ? planar_init(c, frame) : dlt_init(c, frame);

  double cost = weighted_cost(c, pose);
  if (!std::isfinite(cost)) {
    // Noisy linear estimates can put points behind the camera. Try the pose mirrored through the
    // optical axis, then both rotations with a refitted translation, then a depth-from-scale guess.
    const Mat3 mirror = Eigen::Vector3d(-1.0, -1.0, 1.0).asDiagonal();
    const Mat3 rotations[] = {pose.rotation(), mirror * pose.rotation()};
    std::vector<Pose> candidates{Pose(rotations[1], mirror * pose.translation())};
    for (const Mat3& r : rotations) {
      const Vec3 t = translation_for_rotation(c, r);
      if (t.allFinite()) candidates.emplace_back(r, t);
    }
    for (const Mat3& r : rotations) candidates.emplace_back(r, fallback_translation(c, frame, r));
    for (const Pose& candidate : candidates) {
      const double candidateCost = weighted_cost(c, candidate);
      if (candidateCost < cost) {
        pose = candidate;
        cost = candidateCost;
      }
    }
  }
  if (!std::isfinite(cost)) fail(ErrorCode::DegenerateConfiguration, "no initial pose places the model in front of the camera");

  PnpResult result{pose, 0.0, 0, false};
  for (int iter = 0; iter < maxIters; ++iter) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t i = 0; i < c.points3d.size(); ++i) {
      const double w = weight_of(c, i);
      if (w == 0.0) continue;
      const Vec3 rx = pose.rotation() * c.points3d[i];
      const Vec3 p = rx + pose.translation();
      const double iz = 1.0 / p.z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << c.cam.fx * iz, 0.0, -c.cam.fx * p.x() * iz * iz, 0.0, c.cam.fy * iz, -c.cam.fy * p.y() * iz * iz;
      Eigen::Matrix<double, 2, 6> j;
      j.leftCols<3>() = -dproj * skew(rx);
      j.rightCols<3>() = dproj;
      const Vec2 r(c.cam.fx * p.x() * iz + c.cam.cx - c.points2d[i].x,
                   c.cam.fy * p.y() * iz + c.cam.cy - c.points2d[i].y);
      jtj.noalias() += w * j.transpose() * j;
      jtr.noalias() += w * j.transpose() * r;
    }
    const Eigen::Matrix<double, 6, 1> step = -jtj.ldlt().solve(jtr);
    if (!step.allFinite()) break;
    result.iterations = iter + 1;

    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 30; ++halving, scale *= 0.5) {
      const Vec3 omega = scale * step.head<3>();
      const Pose candidate(project_to_so3(rotation_from_axis_angle(omega) * pose.rotation()),
                           pose.translation() + scale * step.tail<3>());
      const double candidateCost = weighted_cost(c, candidate);
      if (candidateCost <= cost * (1.0 + 1e-12)) {
        pose = candidate;
        cost = candidateCost;
        improved = true;
        break;
      }
    }
    if (step.norm() < tol || (!improved && scale * step.norm() < tol)) {
      result.converged = true;
      break;
    }
    if (!improved) break;
  }
  if (!result.converged) log::debug("pnp: stopped after ", result.iterations, " iterations without converging");
  result.pose = pose;
  result.rms = reprojection_rms(c, pose);
  return result;
}

double reprojection_rms(const Correspondences& c, const Pose& pose) {
  if (c.points2d.size() != c.points3d.size()) fail(ErrorCode::DimensionMismatch, "image/model point counts differ");
  double sum = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < c.points3d.size(); ++i) {
    const double w = weight_of(c, i);
    if (w == 0.0) continue;
    const Keypoint2D k = project_point(pose.apply(c.points3d[i]), c.cam);
    const double du = k.x - c.points2d[i].x;
    const double dv = k.y - c.points2d[i].y;
    sum += w * (du * du + dv * dv);
    total += w;
  }
  return total > 0.0 ? std::sqrt(sum / total) : 0.0;
}

}  // namespace otkd
