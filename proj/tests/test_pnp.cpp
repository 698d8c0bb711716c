#include "doctest.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "otkd/error.hpp"
#include "otkd/pnp.hpp"
#include "support.hpp"

using namespace otkd;

namespace {

Correspondences make_case(const std::vector<Vec3>& model, const Pose& pose, const CameraIntrinsics& cam) {
  return Correspondences{project_points(model, pose, cam), model, cam, std::nullopt};
}

std::vector<Vec3> cube() {
  std::vector<Vec3> pts;
  for (int x : {-1, 1})
    for (int y : {-1, 1})
      for (int z : {-1, 1}) pts.emplace_back(0.5 * x, 0.5 * y, 0.5 * z);
  return pts;
}

}  // namespace

TEST_CASE("noiseless round trip") {
  std::mt19937_64 rng(1);
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 6 + rng() % 10;
    const auto model = support::random_points3d(rng, n);
    const Pose gt = support::random_pose(rng, std::uniform_real_distribution<double>(3.0, 8.0)(rng));
    const CameraIntrinsics cam(std::uniform_real_distribution<double>(60, 600)(rng), std::uniform_real_distribution<double>(60, 600)(rng),
                               std::uniform_real_distribution<double>(20, 320)(rng), std::uniform_real_distribution<double>(20, 240)(rng));
    const Correspondences c = make_case(model, gt, cam);
    const PnpResult r = pnp_solve(c);
    CHECK(rotation_error_deg(r.pose, gt) < 1e-6);
    CHECK(translation_error(r.pose, gt) < 1e-9);
    CHECK(r.rms < 1e-8);
    CHECK(is_rotation(r.pose.rotation(), 1e-9));

    const KeypointSet back = project_points(model, r.pose, cam);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(back[i].x - c.points2d[i].x) < 1e-7);
      CHECK(std::abs(back[i].y - c.points2d[i].y) < 1e-7);
    }
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
}

TEST_CASE("canonical cube in front of the camera") {
  const CameraIntrinsics cam(80, 80, 32, 32);
  const Pose gt(Mat3::Identity(), Vec3(0, 0, 5));
  const PnpResult r = pnp_solve(make_case(cube(), gt, cam));
  CHECK(rotation_error_deg(r.pose, gt) < 1e-6);
  CHECK(translation_error(r.pose, gt) < 1e-9);
  CHECK(r.converged);
}

TEST_CASE("coplanar models use the homography path") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto model = support::random_points3d(rng, 8);
    for (auto& p : model) p.z() = 0.0;
    const Pose gt = support::random_pose(rng);
    const PnpResult r = pnp_solve(make_case(model, gt, CameraIntrinsics(300, 300, 160, 120)));
    CHECK(rotation_error_deg(r.pose, gt) < 1e-6);
    CHECK(translation_error(r.pose, gt) < 1e-9);
  }
}

TEST_CASE("error contracts") {
  std::mt19937_64 rng(3);
  const CameraIntrinsics cam(80, 80, 32, 32);
  const Pose gt(Mat3::Identity(), Vec3(0, 0, 5));
  auto model = support::random_points3d(rng, 5);
  try {
    pnp_solve(make_case(model, gt, cam));
    FAIL("expected InsufficientCorrespondences");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientCorrespondences);
  }

  std::vector<Vec3> line;
  for (int i = 0; i < 8; ++i) line.emplace_back(0.1 * i, 0.05 * i, -0.02 * i);
  try {
    pnp_solve(make_case(line, gt, cam));
    FAIL("expected DegenerateConfiguration");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateConfiguration);
  }

  Correspondences c = make_case(support::random_points3d(rng, 7), gt, cam);
  c.points3d.pop_back();
  CHECK_THROWS_AS(c.validate(), Error);
  c = make_case(support::random_points3d(rng, 7), gt, cam);
  c.weights = std::vector<double>(7, 1.0);
  (*c.weights)[2] = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("rotation error grows with keypoint noise") {
  std::mt19937_64 rng(4);
  const CameraIntrinsics cam(80, 80, 32, 32);
  std::vector<double> medians;
  for (double sigma : {0.5, 1.0, 2.0}) {
    std::mt19937_64 scenes(99);
    std::vector<double> errors;
    for (int trial = 0; trial < 200; ++trial) {
      const auto model = cube();
      const Pose gt = support::random_pose(scenes);
      Correspondences c = make_case(model, gt, cam);
      std::normal_distribution<double> noise(0.0, sigma);
      std::vector<Keypoint2D> pts = c.points2d.points();
      for (auto& p : pts) {
        p.x += noise(rng);
        p.y += noise(rng);
      }
      c.points2d = KeypointSet(pts);
      errors.push_back(rotation_error_deg(pnp_solve(c).pose, gt));
    }
    std::nth_element(errors.begin(), errors.begin() + 100, errors.end());
    medians.push_back(errors[100]);
  }
  CHECK(medians[0] < medians[1]);
  CHECK(medians[1] < medians[2]);
}

TEST_CASE("reprojection RMS") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = support::random_points3d(rng, 9);
    const Pose gt = support::random_pose(rng);
    const CameraIntrinsics cam(120, 110, 40, 30);
    Correspondences c = make_case(model, gt, cam);
    CHECK(reprojection_rms(c, gt) < 1e-8);

    const Pose other = support::random_pose(rng);
    double sum = 0.0;
    double wsum = 0.0;
    c.weights = support::uniform_vector(rng, 9, 0.0, 2.0);
    for (std::size_t i = 0; i < 9; ++i) {
      const Vec3 p = other.rotation() * model[i] + other.translation();
      const double du = cam.fx * p.x() / p.z() + cam.cx - c.points2d[i].x;
      const double dv = cam.fy * p.y() / p.z() + cam.cy - c.points2d[i].y;
      sum += (*c.weights)[i] * (du * du + dv * dv);
      wsum += (*c.weights)[i];
    }
    CHECK(std::abs(reprojection_rms(c, other) - std::sqrt(sum / wsum)) < 1e-12 * std::max(1.0, std::sqrt(sum / wsum)));

    c.weights.reset();
    const Pose nudged(gt.rotation(), gt.translation() + Vec3(1e-4, 0, 0));
    CHECK(reprojection_rms(c, nudged) > reprojection_rms(c, gt));
  }
}

TEST_CASE("zero-weight correspondences have no influence") {
  std::mt19937_64 rng(6);
  const CameraIntrinsics cam(80, 80, 32, 32);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = support::random_points3d(rng, 8);
    const Pose gt = support::random_pose(rng);
    Correspondences clean = make_case(model, gt, cam);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<Keypoint2D> pts = clean.points2d.points();
    for (auto& p : pts) {
      p.x += noise(rng);
      p.y += noise(rng);
    }
    clean.points2d = KeypointSet(pts);
    clean.weights = std::vector<double>(8, 1.0);

    Correspondences padded = clean;
    std::vector<Keypoint2D> more = pts;
    for (int k = 0; k < 3; ++k) {
      padded.points3d.push_back(support::random_points3d(rng, 1)[0]);
      more.push_back({std::uniform_real_distribution<double>(0, 64)(rng), std::uniform_real_distribution<double>(0, 64)(rng)});
      padded.weights->push_back(0.0);
    }
    padded.points2d = KeypointSet(more);

    const PnpResult a = pnp_solve(clean);
    const PnpResult b = pnp_solve(padded);
    CHECK((a.pose.rotation() - b.pose.rotation()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((a.pose.translation() - b.pose.translation()).cwiseAbs().maxCoeff() < 1e-9);

    const PnpResult again = pnp_solve(padded);
    CHECK(again.pose.rotation() == b.pose.rotation());
    CHECK(again.pose.translation() == b.pose.translation());
  }
}
