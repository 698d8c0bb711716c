#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "otkd/error.hpp"
#include "otkd/uncertainty.hpp"
#include "support.hpp"

using namespace otkd;

namespace {

std::vector<MemberPrediction> random_ensemble(std::mt19937_64& rng, std::size_t e, std::size_t n, double dropProb) {
  std::uniform_real_distribution<double> pos(0.0, 64.0);
  std::bernoulli_distribution drop(dropProb);
  std::vector<MemberPrediction> members(e);
  for (auto& m : members) {
    for (std::size_t k = 0; k < n; ++k) {
      if (!drop(rng)) m.push_back({k, {pos(rng), pos(rng)}});
    }
  }
  return members;
}

}  // namespace

TEST_CASE("majority vote alignment") {
  SUBCASE("all members predict everything") {
    std::mt19937_64 rng(1);
    const auto members = random_ensemble(rng, 4, 6, 0.0);
    const EnsemblePrediction p = majority_vote_align(members);
    CHECK(p.memberCount == 4);
    CHECK(p.keypointCount == 6);
    CHECK(std::all_of(p.presentMask.begin(), p.presentMask.end(), [](auto v) { return v == 1; }));
    CHECK(std::all_of(p.forced.begin(), p.forced.end(), [](auto v) { return v == 0; }));
  }
  SUBCASE("a keypoint seen by 1 of 4 members gets u = 1") {
    std::vector<MemberPrediction> members(4);
    for (std::size_t e = 0; e < 4; ++e) members[e].push_back({0, {1.0 + e, 2.0}});
    members[2].push_back({1, {5.0, 5.0}});
    const EnsemblePrediction p = estimate_uncertainty(members);
    CHECK(p.forced[1] == 1);
    CHECK(p.uncertainty[1] == 1.0);
    CHECK(p.uncertainty[0] < 1.0);
  }
  SUBCASE("ties at exactly E/2 are not a majority") {
    std::vector<MemberPrediction> members(4);
    for (std::size_t e = 0; e < 4; ++e) members[e].push_back({0, {0.0, 0.0}});
    members[0].push_back({1, {1.0, 1.0}});
    members[1].push_back({1, {1.0, 1.0}});
    members[2].push_back({2, {1.0, 1.0}});
    members[1].push_back({2, {1.0, 1.0}});
    members[3].push_back({2, {1.0, 1.0}});
    const EnsemblePrediction p = estimate_uncertainty(members);
    CHECK(p.uncertainty[1] == 1.0);
    CHECK(p.forced[2] == 0);
    CHECK(p.uncertainty[2] == 0.0);
  }
  SUBCASE("mask counts equal a recount") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t e = 1 + rng() % 6;
      const auto members = random_ensemble(rng, e, 7, 0.4);
      const EnsemblePrediction p = majority_vote_align(members, 7);
      for (std::size_t k = 0; k < 7; ++k) {
        std::size_t count = 0;
        for (const auto& m : members)
          for (const auto& kp : m) count += kp.id == k ? 1 : 0;
        CHECK(p.contributor_count(k) == count);
        CHECK(static_cast<bool>(p.forced[k]) == (2 * count <= e));
      }
    }
  }
  CHECK_THROWS_AS(majority_vote_align(std::vector<MemberPrediction>{}), Error);
  std::vector<MemberPrediction> dup(1);
  dup[0] = {{0, {0, 0}}, {0, {1, 1}}};
  CHECK_THROWS_AS(majority_vote_align(dup), Error);
}

TEST_CASE("ensemble statistics") {
  std::vector<MemberPrediction> members(2);
  members[0].push_back({0, {0.0, 0.0}});
  members[1].push_back({0, {2.0, 0.0}});
  const EnsembleStatistics s = ensemble_statistics(majority_vote_align(members));
  CHECK(s.meanSet[0] == Keypoint2D{1.0, 0.0});
  CHECK(s.variance[0] == 1.0);

  std::vector<MemberPrediction> same(3, MemberPrediction{{0, {4.0, 5.0}}});
  CHECK(ensemble_statistics(majority_vote_align(same)).variance[0] == 0.0);

  std::vector<MemberPrediction> none(2);
  none[0].push_back({1, {0.0, 0.0}});
  none[1].push_back({1, {0.0, 0.0}});
  CHECK_THROWS_AS(ensemble_statistics(majority_vote_align(none, 2)), Error);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto members2 = random_ensemble(rng, 1 + rng() % 6, 5, 0.0);
    const EnsemblePrediction p = majority_vote_align(members2);
    const EnsembleStatistics st = ensemble_statistics(p);
    for (std::size_t k = 0; k < 5; ++k) {
      double mx = 0.0, my = 0.0;
      for (const auto& m : members2) {
        mx += m[k].point.x;
        my += m[k].point.y;
      }
      const double e = static_cast<double>(members2.size());
      mx /= e;
      my /= e;
      double v = 0.0;
      for (const auto& m : members2) v += std::pow(m[k].point.x - mx, 2) + std::pow(m[k].point.y - my, 2);
      v /= e;
      CHECK(std::abs(st.meanSet[k].x - mx) < 1e-12);
      CHECK(std::abs(st.meanSet[k].y - my) < 1e-12);
      CHECK(std::abs(st.variance[k] - v) < 1e-12 * std::max(1.0, v));
    }
  }
}

TEST_CASE("variance to uncertainty") {
  const std::vector<double> v{0.0, 1.0, 2.5};
  const auto u = variance_to_uncertainty(v);
  CHECK(u[0] == 0.0);
  CHECK(u[1] == doctest::Approx(0.761594).epsilon(1e-6));
  CHECK(variance_to_uncertainty(std::vector<double>{2.5}, 2.5)[0] == doctest::Approx(std::tanh(1.0)));
  const std::vector<std::uint8_t> forced{0, 1, 0};
  CHECK(variance_to_uncertainty(v, 1.0, forced)[1] == 1.0);
  CHECK_THROWS_AS(variance_to_uncertainty(v, 0.0), Error);

  std::mt19937_64 rng(4);
  auto r = support::uniform_vector(rng, 200, 0.0, 3.0);
  std::sort(r.begin(), r.end());
  const auto ur = variance_to_uncertainty(r);
  for (std::size_t i = 1; i < r.size(); ++i) {
    if (r[i] > r[i - 1]) CHECK(ur[i] > ur[i - 1]);
  }
}

TEST_CASE("confidence, student weights and blending") {
  const auto c = teacher_confidence(std::vector<double>{0.0, 0.5, 1.0});
  CHECK(c == std::vector<double>{1.0, 0.5, 0.0});
  CHECK(teacher_confidence(std::vector<double>(3, 0.0)) == std::vector<double>(3, 1.0));
  CHECK_THROWS_AS(teacher_confidence(std::vector<double>{1.5}), Error);
  CHECK_THROWS_AS(teacher_confidence(std::vector<double>{-0.1}), Error);

  std::mt19937_64 rng(5);
  const auto u = support::uniform_vector(rng, 100, 0.0, 1.0);
  const auto back = teacher_confidence(teacher_confidence(u));
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(std::abs(back[i] - u[i]) < 1e-15);

  CHECK(student_uniform_weights(4) == std::vector<double>(4, 0.25));
  CHECK(student_uniform_weights(1) == std::vector<double>{1.0});
  CHECK_THROWS_AS(student_uniform_weights(0), Error);
  for (std::size_t m : {3u, 7u, 1000u, 10000u}) {
    const auto w = student_uniform_weights(m);
    double s = 0.0;
    for (double x : w) s += x;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  const std::vector<double> ac{1.0, 0.5};
  const std::vector<double> ae{0.8, 0.6};
  const auto b = blend_weights(ac, ae, WeightBlend(0.5));
  CHECK(b[0] == doctest::Approx(0.9));
  CHECK(b[1] == doctest::Approx(0.55));
  CHECK(WeightBlend().lambda() == 0.5);
  CHECK_THROWS_AS(WeightBlend(1.5), Error);
  CHECK_THROWS_AS(blend_weights(ac, std::vector<double>{1.0}, WeightBlend()), Error);

  for (int trial = 0; trial < 100; ++trial) {
    const auto x = support::uniform_vector(rng, 6, 0.0, 1.0);
    const auto y = support::uniform_vector(rng, 6, 0.0, 1.0);
    CHECK(blend_weights(x, y, WeightBlend(0.0)) == y);
    CHECK(blend_weights(x, y, WeightBlend(1.0)) == x);
  }
}

TEST_CASE("pipeline invariants") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t e = 1 + rng() % 6;
    auto members = random_ensemble(rng, e, 6, 0.3);
    // every keypoint needs at least one contributor
    for (std::size_t k = 0; k < 6; ++k) members[0].push_back({k, {1.0, 1.0}});
    std::sort(members[0].begin(), members[0].end(), [](auto& a, auto& b) { return a.id < b.id; });
    members[0].erase(std::unique(members[0].begin(), members[0].end(), [](auto& a, auto& b) { return a.id == b.id; }),
                     members[0].end());

    const EnsemblePrediction p = estimate_uncertainty(members, 10.0);
    CHECK(p.uncertainty.size() == p.meanSet.size());
    for (std::size_t k = 0; k < 6; ++k) {
      CHECK(p.uncertainty[k] >= 0.0);
      CHECK(p.uncertainty[k] <= 1.0);
      if (2 * p.contributor_count(k) < e) CHECK(p.uncertainty[k] == 1.0);
    }
    const auto blended = blend_weights(teacher_confidence(p.uncertainty), std::vector<double>(6, 1.0), WeightBlend());
    for (double w : blended) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
    }

    auto shuffled = members;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const EnsemblePrediction q = estimate_uncertainty(shuffled, 10.0);
    for (std::size_t k = 0; k < 6; ++k) {
      CHECK(q.meanSet[k].x == doctest::Approx(p.meanSet[k].x).epsilon(1e-12));
      CHECK(q.meanSet[k].y == doctest::Approx(p.meanSet[k].y).epsilon(1e-12));
      CHECK(q.uncertainty[k] == doctest::Approx(p.uncertainty[k]).epsilon(1e-12));
    }

    // Duplicating every member leaves the statistics unchanged.
    auto doubled = members;
    doubled.insert(doubled.end(), members.begin(), members.end());
    const EnsembleStatistics s1 = ensemble_statistics(majority_vote_align(members, 6));
    const EnsembleStatistics s2 = ensemble_statistics(majority_vote_align(doubled, 6));
    for (std::size_t k = 0; k < 6; ++k) CHECK(s2.variance[k] == doctest::Approx(s1.variance[k]).epsilon(1e-12));

    // Duplicating the contributor nearest the mean never increases the variance.
    for (std::size_t k = 0; k < 6; ++k) {
      double best = 1e300;
      MemberPrediction nearest;
      for (const auto& m : members) {
        for (const auto& kp : m) {
          if (kp.id != k) continue;
          const double d = std::hypot(kp.point.x - s1.meanSet[k].x, kp.point.y - s1.meanSet[k].y);
          if (d < best) {
            best = d;
            nearest = {kp};
          }
        }
      }
      auto withDup = members;
      withDup.push_back(nearest);
      const EnsembleStatistics s3 = ensemble_statistics(majority_vote_align(withDup, 6));
      CHECK(s3.variance[k] <= s1.variance[k] * (1 + 1e-12) + 1e-12);
    }
  }
}

TEST_CASE("duplicating an outlying member can raise the variance") {
  // {0, 0, 0, 10} has variance 18.75; another copy of 10 raises it to 24.
  std::vector<MemberPrediction> members;
  for (double x : {0.0, 0.0, 0.0, 10.0}) members.push_back({{0, {x, 0.0}}});
  CHECK(ensemble_statistics(majority_vote_align(members)).variance[0] == doctest::Approx(18.75));
  members.push_back({{0, {10.0, 0.0}}});
  CHECK(ensemble_statistics(majority_vote_align(members)).variance[0] == doctest::Approx(24.0));
}

TEST_CASE("an ensemble of one has zero uncertainty") {
  std::mt19937_64 rng(7);
  const auto members = random_ensemble(rng, 1, 5, 0.0);
  const EnsemblePrediction p = estimate_uncertainty(members);
  for (double u : p.uncertainty) CHECK(u == 0.0);
  for (double c : teacher_confidence(p.uncertainty)) CHECK(c == 1.0);
}

TEST_CASE("ensemble CSV") {
  std::istringstream in("member_id,keypoint_id,x,y,present\n0,0,1,2,1\n0,1,3,4,1\n1,0,1.5,2,1\n1,1,0,0,0\n");
  const EnsembleCsv csv = load_ensemble_csv(in);
  CHECK(csv.members.size() == 2);
  CHECK(csv.keypointCount == 2);
  CHECK(csv.members[1].size() == 1);

  std::istringstream bad("0,0,1,2,1\n0,1,x,4,1\n");
  try {
    load_ensemble_csv(bad, "e.csv");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("e.csv:2") != std::string::npos);
  }
}
