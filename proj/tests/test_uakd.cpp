#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "otkd/error.hpp"
#include "otkd/uakd.hpp"
#include "otkd/uncertainty.hpp"
#include "support.hpp"

using namespace otkd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

KeypointSet moved(const KeypointSet& k, std::size_t i, double dx, double dy) {
  std::vector<Keypoint2D> p = k.points();
  p[i].x += dx;
  p[i].y += dy;
  return KeypointSet(p);
}

double max_abs(const Eigen::MatrixX2d& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("identical sets give zero loss and gradient") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const KeypointSet k = support::random_keypoints(rng, 6);
    const auto w = student_uniform_weights(6);
    // Off-diagonal entropic mass decays like exp(-d / eps); a small eps makes it negligible.
    SinkhornConfig cfg;
    cfg.tau = kInf;
    cfg.epsilonRelative = 1e-4;
    const PredictionLossResult r = prediction_loss(k, k, w, w, cfg);
    CHECK(r.loss < 1e-9);
    CHECK(max_abs(r.gradient) < 1e-9);
  }
}

TEST_CASE("single pair example") {
  const KeypointSet s({{0, 0}});
  const KeypointSet t({{3, 4}});
  const std::vector<double> one{1.0};
  SinkhornConfig cfg;
  cfg.tau = kInf;
  const PredictionLossResult r = prediction_loss(s, t, one, one, cfg);
  CHECK(r.loss == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(r.gradient(0, 0) == doctest::Approx(-0.6).epsilon(1e-12));
  CHECK(r.gradient(0, 1) == doctest::Approx(-0.8).epsilon(1e-12));
}

TEST_CASE("coincident pairs use the zero subgradient") {
  const KeypointSet s({{1, 1}, {5, 5}});
  const KeypointSet t({{1, 1}});
  MatrixRM e(2, 1);
  e << 0.7, 0.3;
  const auto g = plan_weighted_distance_gradient(TransportPlan::from_entries(e), s, t);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(1, 0) == doctest::Approx(0.3 / std::sqrt(2.0)));
  CHECK_THROWS_AS(plan_weighted_distance(TransportPlan::from_entries(e), t, t), Error);
}

TEST_CASE("gradient matches central differences with the plan held fixed") {
  std::mt19937_64 rng(2);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const KeypointSet s = support::random_keypoints(rng, 4);
    const KeypointSet t = support::random_keypoints(rng, 6);
    const auto alphaT = support::uniform_vector(rng, 6, 0.0, 1.0);
    const PredictionLossResult r = prediction_loss(s, t, student_uniform_weights(4), alphaT, SinkhornConfig{});
    Eigen::MatrixX2d fd(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
      for (int d = 0; d < 2; ++d) {
        const double up = plan_weighted_distance(r.plan, moved(s, i, d == 0 ? h : 0, d == 1 ? h : 0), t);
        const double dn = plan_weighted_distance(r.plan, moved(s, i, d == 0 ? -h : 0, d == 1 ? -h : 0), t);
        fd(static_cast<Eigen::Index>(i), d) = (up - dn) / (2 * h);
      }
    }
    CHECK(max_abs(fd - r.gradient) <= 1e-4 * max_abs(r.gradient));
    CHECK(r.loss == doctest::Approx(plan_weighted_distance(r.plan, s, t)).epsilon(1e-15));
  }
}

TEST_CASE("detached gradient is the derivative of the regularized transport value") {
  // Envelope property: d/ds min_P F(P, C(s)) = <P*, dC/ds>, which is exactly the returned gradient.
  std::mt19937_64 rng(3);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const KeypointSet s = support::random_keypoints(rng, 4);
    const KeypointSet t = support::random_keypoints(rng, 6);
    const auto aS = student_uniform_weights(4);
    const auto aT = support::uniform_vector(rng, 6, 0.2, 1.0);
    SinkhornConfig cfg;
    cfg.epsilon = 0.5;
    cfg.tol = 1e-13;
    cfg.maxIters = 100000;
    const PredictionLossResult r = prediction_loss(s, t, aS, aT, cfg);
    auto value = [&](const KeypointSet& moved) {
      const CostMatrix c = cost_matrix(moved, t);
      return transport_objective(sinkhorn_unbalanced(c, aS, aT, cfg), c, aS, aT, cfg);
    };
    Eigen::MatrixX2d fd(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
      for (int d = 0; d < 2; ++d) {
        fd(static_cast<Eigen::Index>(i), d) = (value(moved(s, i, d == 0 ? h : 0, d == 1 ? h : 0)) -
                                               value(moved(s, i, d == 0 ? -h : 0, d == 1 ? -h : 0))) /
                                              (2 * h);
      }
    }
    CHECK(max_abs(fd - r.gradient) <= 1e-5 * max_abs(r.gradient));
  }
}

TEST_CASE("uniform OT baseline") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const KeypointSet s = support::random_keypoints(rng, 5);
    const KeypointSet t = support::random_keypoints(rng, 7);
    const auto existence = support::uniform_vector(rng, 7, 0.3, 1.0);
    const auto u = support::uniform_vector(rng, 7, 0.0, 1.0);
    const auto aS = student_uniform_weights(5);

    const auto alphaT0 = blend_weights(teacher_confidence(u), existence, WeightBlend(0.0));
    const PredictionLossResult uakd0 = prediction_loss(s, t, aS, alphaT0, SinkhornConfig{});
    const PredictionLossResult base = uniform_ot_baseline_loss(s, t, std::span<const double>(existence), SinkhornConfig{});
    CHECK(base.loss == uakd0.loss);
    CHECK(base.plan.entries == uakd0.plan.entries);

    const std::vector<double> ones(7, 1.0);
    const auto alphaTu0 = blend_weights(teacher_confidence(std::vector<double>(7, 0.0)), ones, WeightBlend());
    const PredictionLossResult uakdU0 = prediction_loss(s, t, aS, alphaTu0, SinkhornConfig{});
    const PredictionLossResult baseOnes = uniform_ot_baseline_loss(s, t, std::span<const double>(ones), SinkhornConfig{});
    CHECK(baseOnes.loss == uakdU0.loss);

    const PredictionLossResult uniform = uniform_ot_baseline_loss(s, t, std::nullopt, SinkhornConfig{});
    const PredictionLossResult direct = prediction_loss(s, t, aS, std::vector<double>(7, 1.0 / 7.0), SinkhornConfig{});
    CHECK(uniform.loss == direct.loss);
  }
}

TEST_CASE("uncertainty weighting moves mass off a corrupted teacher keypoint") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const KeypointSet truth = support::random_keypoints(rng, 8, 8.0, 56.0);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<Keypoint2D> sp;
    for (const auto& p : truth.points()) sp.push_back({p.x + noise(rng), p.y + noise(rng)});
    const KeypointSet student(sp);
    const std::size_t bad = rng() % 8;
    const KeypointSet teacher = moved(truth, bad, 15.0, -12.0);

    std::vector<double> u(8, 0.05);
    u[bad] = 0.99;
    const std::vector<double> existence(8, 1.0);
    const auto alphaT = blend_weights(teacher_confidence(u), existence, WeightBlend());
    const auto aS = student_uniform_weights(8);
    const PredictionLossResult uakd = prediction_loss(student, teacher, aS, alphaT, SinkhornConfig{});
    const PredictionLossResult base = uniform_ot_baseline_loss(student, teacher, std::span<const double>(existence), SinkhornConfig{});
    CHECK(uakd.plan.entries.col(static_cast<Eigen::Index>(bad)).sum() < base.plan.entries.col(static_cast<Eigen::Index>(bad)).sum());
  }
}

TEST_CASE("loss invariants") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const KeypointSet s = support::random_keypoints(rng, 5);
    const KeypointSet t = support::random_keypoints(rng, 6);
    const auto aS = student_uniform_weights(5);
    auto aT = support::uniform_vector(rng, 6, 0.2, 1.0);

    const PredictionLossResult r = prediction_loss(s, t, aS, aT, SinkhornConfig{});
    CHECK(r.loss >= 0.0);
    CHECK(r.gradient.allFinite());

    const double dx = std::uniform_real_distribution<double>(-100, 100)(rng);
    const double dy = std::uniform_real_distribution<double>(-100, 100)(rng);
    const PredictionLossResult shifted = prediction_loss(s.translated(dx, dy), t.translated(dx, dy), aS, aT, SinkhornConfig{});
    CHECK(shifted.loss == doctest::Approx(r.loss).epsilon(1e-9));

    // Balanced, and unbalanced with tau scaled alongside the costs: the plan is scale-free.
    for (bool balanced : {true, false}) {
      SinkhornConfig cfg;
      cfg.tau = balanced ? kInf : 10.0;
      cfg.tol = 1e-12;
      cfg.maxIters = 100000;
      SinkhornConfig cfg2 = cfg;
      if (!balanced) cfg2.tau = 20.0;
      const double l1 = prediction_loss(s, t, aS, aT, cfg).loss;
      const double l2 = prediction_loss(s.scaled(2.0), t.scaled(2.0), aS, aT, cfg2).loss;
      CHECK(l2 == doctest::Approx(2.0 * l1).epsilon(1e-8));
    }

    const std::size_t j = rng() % 6;
    aT[j] = 0.0;
    SinkhornConfig masked;
    masked.tau = 1e3;
    const double before = prediction_loss(s, t, aS, aT, masked).loss;
    const double after = prediction_loss(s, moved(t, j, dx, dy), aS, aT, masked).loss;
    CHECK(std::abs(after - before) < 1e-3);
  }
}

TEST_CASE("weights must match the sets") {
  const KeypointSet s({{0, 0}, {1, 1}});
  CHECK_THROWS_AS(prediction_loss(s, s, std::vector<double>{1.0}, std::vector<double>{1.0, 1.0}, SinkhornConfig{}), Error);
  CHECK_THROWS_AS(prediction_loss(KeypointSet(), s, std::vector<double>{}, std::vector<double>{1.0, 1.0}, SinkhornConfig{}),
                  Error);
}
