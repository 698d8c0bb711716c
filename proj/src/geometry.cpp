#include "otkd/geometry.hpp"

#include <Eigen/SVD>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "otkd/error.hpp"

namespace otkd {

namespace {

void check_finite(const Keypoint2D& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
    fail(ErrorCode::InvalidArgument, "keypoint coordinates must be finite");
  }
}

}  // namespace

KeypointSet::KeypointSet(std::vector<Keypoint2D> points) : points_(std::move(points)) {
  for (const auto& p : points_) check_finite(p);
}

KeypointSet::KeypointSet(std::vector<Keypoint2D> points, std::vector<double> weights)
    : KeypointSet(std::move(points)) {
  if (weights.size() != points_.size()) {
    fail(ErrorCode::DimensionMismatch, "keypoint weights must match the number of points");
  }
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) fail(ErrorCode::NegativeWeight, "keypoint weights must be >= 0");
  }
  weights_ = std::move(weights);
}

KeypointSet KeypointSet::translated(double dx, double dy) const {
  KeypointSet out = *this;
  for (auto& p : out.points_) {
    p.x += dx;
    p.y += dy;
  }
  return out;
}

KeypointSet KeypointSet::scaled(double factor) const {
  KeypointSet out = *this;
  for (auto& p : out.points_) {
    p.x *= factor;
    p.y *= factor;
  }
  return out;
}

double max_pairwise_distance(std::span<const Vec3> points) {
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      best = std::max(best, (points[i] - points[j]).norm());
    }
  }
  return best;
}

Model3D::Model3D(std::vector<Vec3> keypoints, bool symmetric)
    : keypoints_(std::move(keypoints)), symmetric_(symmetric) {
  if (keypoints_.size() < 4) fail(ErrorCode::InvalidModel, "a model needs at least 4 keypoints");
  for (const auto& p : keypoints_) {
    if (!p.allFinite()) fail(ErrorCode::InvalidModel, "model keypoints must be finite");
  }
  diameter_ = max_pairwise_distance(keypoints_);
  if (!(diameter_ > 0.0)) fail(ErrorCode::InvalidModel, "model diameter must be positive");
}

Model3D::Model3D(std::vector<Vec3> keypoints, double diameter, bool symmetric)
    : Model3D(std::move(keypoints), symmetric) {
  if (!std::isfinite(diameter) || std::abs(diameter - diameter_) > 1e-6 * std::max(1.0, diameter_)) {
    std::ostringstream msg;
    msg << "declared diameter " << diameter << " does not match max pairwise distance " << diameter_;
    fail(ErrorCode::InvalidModel, msg.str());
  }
}

Model3D load_model3d(std::istream& in, const std::string& source) {
  std::optional<double> diameter;
  std::optional<bool> symmetric;
  std::vector<Vec3> points;
  std::string line;
  int line_no = 0;
  auto parse_error = [&](const std::string& what) {
    fail(ErrorCode::ParseError, source + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::string head;
    fields >> head;
    if (head == "diameter") {
      double d = 0.0;
      if (!(fields >> d)) parse_error("expected `diameter <meters>`");
      diameter = d;
    } else if (head == "symmetric") {
      int flag = -1;
      if (!(fields >> flag) || (flag != 0 && flag != 1)) parse_error("expected `symmetric 0|1`");
      symmetric = flag == 1;
    } else {
      std::istringstream xyz(line);
      Vec3 p;
      if (!(xyz >> p.x() >> p.y() >> p.z())) parse_error("expected `x y z`");
      std::string rest;
      if (xyz >> rest) parse_error("trailing data after `x y z`");
      points.push_back(p);
    }
  }
  if (!diameter) fail(ErrorCode::ParseError, source + ": missing `diameter` line");
  if (!symmetric) fail(ErrorCode::ParseError, source + ": missing `symmetric` line");
  return Model3D(std::move(points), *diameter, *symmetric);
}

Model3D load_model3d_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, "cannot open " + path);
  return load_model3d(in, path);
}

void save_model3d(std::ostream& out, const Model3D& model) {
  out.precision(17);
  out << "diameter " << model.diameter() << "\n";
  out << "symmetric " << (model.symmetric() ? 1 : 0) << "\n";
  for (const auto& p : model.keypoints()) out << p.x() << ' ' << p.y() << ' ' << p.z() << "\n";
}

bool is_rotation(const Mat3& rotation, double tol) {
  if (!rotation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Mat3 project_to_so3(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

Mat3 rotation_from_axis_angle(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Pose::Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!is_rotation(rotation_)) fail(ErrorCode::InvalidPose, "rotation is not in SO(3)");
  if (!translation_.allFinite()) fail(ErrorCode::InvalidPose, "translation must be finite");
}

Pose Pose::from_axis_angle(const Vec3& axis_angle, const Vec3& translation) {
  return Pose(rotation_from_axis_angle(axis_angle), translation);
}

Pose Pose::compose(const Pose& rhs) const {
  return Pose(rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_);
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return Pose(rt, -(rt * translation_));
}

CameraIntrinsics::CameraIntrinsics(double fx_, double fy_, double cx_, double cy_)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    fail(ErrorCode::InvalidArgument, "focal lengths must be positive and finite");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    fail(ErrorCode::InvalidArgument, "principal point must be finite");
  }
}

Keypoint2D project_point(const Vec3& p, const CameraIntrinsics& cam) {
  if (!(p.z() > 0.0)) fail(ErrorCode::PointBehindCamera, "point has non-positive depth");
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

KeypointSet project_points(std::span<const Vec3> points, const Pose& pose,
                           const CameraIntrinsics& cam) {
  std::vector<Keypoint2D> out;
  out.reserve(points.size());
  for (const auto& x : points) out.push_back(project_point(pose.apply(x), cam));
  return KeypointSet(std::move(out));
}

KeypointSet project(const Model3D& model, const Pose& pose, const CameraIntrinsics& cam) {
  return project_points(model.keypoints(), pose, cam);
}

double add_metric(const Model3D& model, const Pose& pred, const Pose& gt) {
  double total = 0.0;
  for (const auto& x : model.keypoints()) total += (pred.apply(x) - gt.apply(x)).norm();
  return total / static_cast<double>(model.size());
}

double add_s_metric(const Model3D& model, const Pose& pred, const Pose& gt) {
  std::vector<Vec3> targets;
  targets.reserve(model.size());
  for (const auto& x : model.keypoints()) targets.push_back(gt.apply(x));
  double total = 0.0;
  for (const auto& x : model.keypoints()) {
    const Vec3 p = pred.apply(x);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : targets) best = std::min(best, (p - q).norm());
    total += best;
  }
  return total / static_cast<double>(model.size());
}

bool add_01d_hit(const Model3D& model, const Pose& pred, const Pose& gt) {
  const double distance = model.symmetric() ? add_s_metric(model, pred, gt) : add_metric(model, pred, gt);
  return distance < 0.1 * model.diameter();
}

double translation_error(const Pose& pred, const Pose& gt) {
  return (pred.translation() - gt.translation()).norm();
}

double rotation_error_deg(const Pose& pred, const Pose& gt) {
  const Mat3 relative = pred.rotation().transpose() * gt.rotation();
  const Vec3 axis(relative(2, 1) - relative(1, 2), relative(0, 2) - relative(2, 0), relative(1, 0) - relative(0, 1));
  const double c = std::clamp((relative.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::atan2(0.5 * axis.norm(), c) * 180.0 / std::numbers::pi;
}

PoseErrors pose_errors(const Pose& pred, const Pose& gt) {
  const double gt_norm = gt.translation().norm();
  if (gt_norm == 0.0) {
    fail(ErrorCode::ZeroGroundTruthTranslation, "E_pose is undefined for a zero ground-truth translation");
  }
  PoseErrors e{};
  e.translation_m = translation_error(pred, gt);
  e.rotation_deg = rotation_error_deg(pred, gt);
  e.pose = e.rotation_deg * std::numbers::pi / 180.0 + e.translation_m / gt_norm;
  return e;
}

}  // namespace otkd
