#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "otkd/geometry.hpp"
#include "otkd/tensor.hpp"

namespace otkd {

struct SceneConfig {
  double imageSize = 64.0;         // square image, pixels
  std::size_t gridSize = 16;       // encoding resolution
  double focal = 80.0;
  double depthMin = 4.5;
  double depthMax = 6.5;
  double lateral = 0.8;            // |t_x|, |t_y| bound, meters
  Vec3 halfExtents = Vec3(0.5, 0.35, 0.25);
  double blobSigma = 0.8;          // grid cells
  double inputNoise = 0.05;

  double delta() const { return static_cast<double>(gridSize) / imageSize; }
  CameraIntrinsics camera() const { return CameraIntrinsics(focal, focal, imageSize / 2.0, imageSize / 2.0); }
  void validate() const;
};

// The 8 corners of an axis-aligned box, x-major order (-,-,-), (-,-,+), ...
Model3D box_model(const Vec3& halfExtents);

struct SyntheticScene {
  Model3D model;
  Pose gtPose;
  CameraIntrinsics cam;
  KeypointSet gtKeypoints;
  Tensor3 renderedFeatures;   // one Gaussian blob channel per model keypoint, plus noise
};

// Channel k holds a unit-peak Gaussian at delta * keypoint k, plus N(0, inputNoise) per cell.
Tensor3 render_encoding(const KeypointSet& keypoints, const SceneConfig& cfg, std::mt19937_64& rng);

Pose random_pose(const SceneConfig& cfg, std::mt19937_64& rng);
SyntheticScene make_scene(const SceneConfig& cfg, const Model3D& model, std::mt19937_64& rng);
std::vector<SyntheticScene> make_scenes(const SceneConfig& cfg, const Model3D& model, std::size_t count,
                                        std::uint64_t seed);

// Stream seed derived from the base seed (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace otkd
