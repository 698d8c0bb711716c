#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace otkd {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// A 2D keypoint in pixel coordinates.
struct Keypoint2D {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Keypoint2D&, const Keypoint2D&) = default;
};

// Ordered keypoints with optional per-keypoint weights.
class KeypointSet {
 public:
  KeypointSet() = default;
  explicit KeypointSet(std::vector<Keypoint2D> points);
  KeypointSet(std::vector<Keypoint2D> points, std::vector<double> weights);

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const Keypoint2D& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<Keypoint2D>& points() const noexcept { return points_; }
  const std::optional<std::vector<double>>& weights() const noexcept { return weights_; }

  // Copy with every keypoint shifted / scaled.
  KeypointSet translated(double dx, double dy) const;
  KeypointSet scaled(double factor) const;

 private:
  std::vector<Keypoint2D> points_;
  std::optional<std::vector<double>> weights_;
};

// Sparse 3D model: keypoints in meters, its diameter and symmetry flag.
class Model3D {
 public:
  Model3D(std::vector<Vec3> keypoints, bool symmetric);
  // Throws InvalidModel unless `diameter` agrees with the exhaustive pairwise maximum.
  Model3D(std::vector<Vec3> keypoints, double diameter, bool symmetric);

  const std::vector<Vec3>& keypoints() const noexcept { return keypoints_; }
  std::size_t size() const noexcept { return keypoints_.size(); }
  double diameter() const noexcept { return diameter_; }
  bool symmetric() const noexcept { return symmetric_; }

 private:
  std::vector<Vec3> keypoints_;
  double diameter_ = 0.0;
  bool symmetric_ = false;
};

double max_pairwise_distance(std::span<const Vec3> points);

// Text format: `diameter <m>`, `symmetric 0|1`, then one `x y z` line per keypoint.
// Blank lines and lines starting with '#' are ignored.
Model3D load_model3d(std::istream& in, const std::string& source = "<model>");
Model3D load_model3d_file(const std::string& path);
void save_model3d(std::ostream& out, const Model3D& model);

bool is_rotation(const Mat3& rotation, double tol = 1e-9);
// Closest rotation in Frobenius norm (orthogonal polar factor with det = +1).
Mat3 project_to_so3(const Mat3& m);
Mat3 rotation_from_axis_angle(const Vec3& axis_angle);

// Rigid transform x -> R x + t from model frame to camera frame.
class Pose {
 public:
  Pose();
  // Throws InvalidPose unless R is orthonormal with det +1 (1e-9) and t is finite.
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return Pose(); }
  static Pose from_axis_angle(const Vec3& axis_angle, const Vec3& translation);

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Vec3 apply(const Vec3& x) const { return rotation_ * x + translation_; }
  // (this * rhs)(x) == this(rhs(x))
  Pose compose(const Pose& rhs) const;
  Pose inverse() const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

struct CameraIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;

  // Throws InvalidArgument unless fx, fy > 0 and all values finite.
  CameraIntrinsics(double fx, double fy, double cx, double cy);
};

// Pinhole projection u = fx X/Z + cx, v = fy Y/Z + cy. Throws PointBehindCamera if Z <= 0.
Keypoint2D project_point(const Vec3& camera_point, const CameraIntrinsics& cam);
KeypointSet project_points(std::span<const Vec3> points, const Pose& pose,
                           const CameraIntrinsics& cam);
KeypointSet project(const Model3D& model, const Pose& pose, const CameraIntrinsics& cam);

double add_metric(const Model3D& model, const Pose& pred, const Pose& gt);
double add_s_metric(const Model3D& model, const Pose& pred, const Pose& gt);
// ADD (or ADD-S for symmetric models) strictly below 10% of the diameter.
bool add_01d_hit(const Model3D& model, const Pose& pred, const Pose& gt);

struct PoseErrors {
  double translation_m;   // E_T
  double rotation_deg;    // E_R
  double pose;            // E_R [rad] + E_T / |t_gt|
};

double translation_error(const Pose& pred, const Pose& gt);
double rotation_error_deg(const Pose& pred, const Pose& gt);
// Throws ZeroGroundTruthTranslation when |t_gt| == 0.
PoseErrors pose_errors(const Pose& pred, const Pose& gt);

}  // namespace otkd
