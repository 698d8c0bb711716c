#include "otkd/scene.hpp"

#include <cmath>
#include <numbers>

#include "otkd/error.hpp"

namespace otkd {

void SceneConfig::validate() const {
  if (!(imageSize > 0.0) || gridSize == 0 || !(focal > 0.0)) {
    fail(ErrorCode::InvalidArgument, "image size, grid size and focal length must be positive");
  }
  if (!(depthMin > 0.0) || !(depthMax >= depthMin)) fail(ErrorCode::InvalidArgument, "need 0 < depth_min <= depth_max");
  if (!(lateral >= 0.0)) fail(ErrorCode::InvalidArgument, "lateral range must be >= 0");
  if (!(halfExtents.minCoeff() > 0.0)) fail(ErrorCode::InvalidArgument, "box half extents must be positive");
  if (!(blobSigma > 0.0) || !(inputNoise >= 0.0)) fail(ErrorCode::InvalidArgument, "blob sigma > 0 and noise >= 0");
  if (halfExtents.norm() >= depthMin) fail(ErrorCode::InvalidArgument, "box would cross the camera plane");
}

Model3D box_model(const Vec3& h) {
  std::vector<Vec3> corners;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      for (int sz : {-1, 1}) corners.emplace_back(sx * h.x(), sy * h.y(), sz * h.z());
    }
  }
  return Model3D(std::move(corners), false);
}

Tensor3 render_encoding(const KeypointSet& keypoints, const SceneConfig& cfg, std::mt19937_64& rng) {
  const std::size_t g = cfg.gridSize;
  Tensor3 out(keypoints.size(), g, g);
  const double inv = 1.0 / (2.0 * cfg.blobSigma * cfg.blobSigma);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    const double gx = cfg.delta() * keypoints[k].x;
    const double gy = cfg.delta() * keypoints[k].y;
    for (std::size_t y = 0; y < g; ++y) {
      for (std::size_t x = 0; x < g; ++x) {
        const double dx = static_cast<double>(x) - gx;
        const double dy = static_cast<double>(y) - gy;
        out(k, y, x) = std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  if (cfg.inputNoise > 0.0) {
    for (double& v : out.values()) v += cfg.inputNoise * noise(rng);
  }
  return out;
}

Pose random_pose(const SceneConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 axis(normal(rng), normal(rng), normal(rng));
  if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
  const double angle = std::numbers::pi * unit(rng);
  const Vec3 t((2.0 * unit(rng) - 1.0) * cfg.lateral, (2.0 * unit(rng) - 1.0) * cfg.lateral,
               cfg.depthMin + (cfg.depthMax - cfg.depthMin) * unit(rng));
  return Pose::from_axis_angle(axis.normalized() * angle, t);
}

SyntheticScene make_scene(const SceneConfig& cfg, const Model3D& model, std::mt19937_64& rng) {
  const Pose pose = random_pose(cfg, rng);
  const CameraIntrinsics cam = cfg.camera();
  KeypointSet keypoints = project(model, pose, cam);
  Tensor3 encoding = render_encoding(keypoints, cfg, rng);
  return SyntheticScene{model, pose, cam, std::move(keypoints), std::move(encoding)};
}

std::vector<SyntheticScene> make_scenes(const SceneConfig& cfg, const Model3D& model, std::size_t count,
                                        std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::vector<SyntheticScene> scenes;
  scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) scenes.push_back(make_scene(cfg, model, rng));
  return scenes;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 finalizer over a mixed key
  std::uint64_t z = base ^ (stream * 0x9e3779b97f4a7c15ULL) ^ (index * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace otkd
