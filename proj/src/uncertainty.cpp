#include "otkd/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>

#include "otkd/error.hpp"

namespace otkd {

MemberPrediction member_from_keypoints(const KeypointSet& keypoints) {
  MemberPrediction member;
  member.reserve(keypoints.size());
  for (std::size_t i = 0; i < keypoints.size(); ++i) member.push_back({i, keypoints[i]});
  return member;
}

std::size_t EnsemblePrediction::contributor_count(std::size_t keypoint) const {
  std::size_t count = 0;
  for (std::size_t e = 0; e < memberCount; ++e) count += present(e, keypoint) ? 1 : 0;
  return count;
}

EnsemblePrediction majority_vote_align(std::span<const MemberPrediction> members,
                                       std::size_t keypointCount) {
  if (members.empty()) fail(ErrorCode::EmptyEnsemble, "ensemble has no members");
  std::size_t n = keypointCount;
  if (n == 0) {
    for (const auto& member : members) {
      for (const auto& kp : member) n = std::max(n, kp.id + 1);
    }
  }
  if (n == 0) fail(ErrorCode::EmptyEnsemble, "ensemble predicts no keypoints");

  EnsemblePrediction pred;
  pred.memberCount = members.size();
  pred.keypointCount = n;
  pred.observations.assign(pred.memberCount * n, Keypoint2D{});
  pred.presentMask.assign(pred.memberCount * n, 0);
  for (std::size_t e = 0; e < members.size(); ++e) {
    for (const auto& kp : members[e]) {
      if (kp.id >= n) fail(ErrorCode::OutOfRange, "keypoint id exceeds the keypoint count");
      if (!std::isfinite(kp.point.x) || !std::isfinite(kp.point.y)) {
        fail(ErrorCode::InvalidArgument, "ensemble keypoints must be finite");
      }
      const std::size_t slot = e * n + kp.id;
      if (pred.presentMask[slot] != 0) fail(ErrorCode::InvalidArgument, "duplicate keypoint id within a member");
      pred.presentMask[slot] = 1;
      pred.observations[slot] = kp.point;
    }
  }
  pred.forced.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    // Strict majority: ties at exactly E/2 do not count.
    if (2 * pred.contributor_count(i) <= pred.memberCount) pred.forced[i] = 1;
  }
  return pred;
}

EnsembleStatistics ensemble_statistics(const EnsemblePrediction& pred) {
  const std::size_t n = pred.keypointCount;
  std::vector<Keypoint2D> means(n);
  std::vector<double> variance(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sx = 0.0, sy = 0.0;
    std::size_t count = 0;
    for (std::size_t e = 0; e < pred.memberCount; ++e) {
      if (!pred.present(e, i)) continue;
      sx += pred.observation(e, i).x;
      sy += pred.observation(e, i).y;
      ++count;
    }
    if (count == 0) {
      fail(ErrorCode::NoContributors, "keypoint " + std::to_string(i) + " has no contributing member");
    }
    const double mx = sx / static_cast<double>(count);
    const double my = sy / static_cast<double>(count);
    double vx = 0.0, vy = 0.0;
    for (std::size_t e = 0; e < pred.memberCount; ++e) {
      if (!pred.present(e, i)) continue;
      const double dx = pred.observation(e, i).x - mx;
      const double dy = pred.observation(e, i).y - my;
      vx += dx * dx;
      vy += dy * dy;
    }
    means[i] = {mx, my};
    variance[i] = (vx + vy) / static_cast<double>(count);
  }
  return {KeypointSet(std::move(means)), std::move(variance)};
}

std::vector<double> variance_to_uncertainty(std::span<const double> variance, double scale,
                                            std::span<const std::uint8_t> forced) {
  if (!(scale > 0.0) || !std::isfinite(scale)) fail(ErrorCode::NonpositiveScale, "uncertainty scale must be positive");
  if (!forced.empty() && forced.size() != variance.size()) {
    fail(ErrorCode::DimensionMismatch, "forced mask must match the variance vector");
  }
  std::vector<double> u(variance.size());
  for (std::size_t i = 0; i < variance.size(); ++i) {
    if (!(variance[i] >= 0.0)) fail(ErrorCode::OutOfRange, "variance must be nonnegative");
    u[i] = (!forced.empty() && forced[i] != 0) ? 1.0 : std::tanh(variance[i] / scale);
  }
  return u;
}

EnsemblePrediction estimate_uncertainty(std::span<const MemberPrediction> members, double scale,
                                        std::size_t keypointCount) {
  EnsemblePrediction pred = majority_vote_align(members, keypointCount);
  EnsembleStatistics stats = ensemble_statistics(pred);
  pred.meanSet = std::move(stats.meanSet);
  pred.uncertainty = variance_to_uncertainty(stats.variance, scale, pred.forced);
  return pred;
}

std::vector<double> teacher_confidence(std::span<const double> u) {
  std::vector<double> alpha(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] >= 0.0 && u[i] <= 1.0)) fail(ErrorCode::OutOfRange, "uncertainty must lie in [0, 1]");
    alpha[i] = 1.0 - u[i];
  }
  return alpha;
}

std::vector<double> student_uniform_weights(std::size_t count) {
  if (count == 0) fail(ErrorCode::ZeroCount, "student keypoint count must be positive");
  return std::vector<double>(count, 1.0 / static_cast<double>(count));
}

WeightBlend::WeightBlend(double lambda) : lambda_(lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorCode::OutOfRange, "lambda must lie in [0, 1]");
}

std::vector<double> blend_weights(std::span<const double> alphaC, std::span<const double> alphaE,
                                  const WeightBlend& blend) {
  if (alphaC.size() != alphaE.size()) fail(ErrorCode::DimensionMismatch, "weight vectors differ in length");
  const double lambda = blend.lambda();
  std::vector<double> out(alphaC.size());
  for (std::size_t i = 0; i < alphaC.size(); ++i) {
    if (!(alphaC[i] >= 0.0 && alphaC[i] <= 1.0) || !(alphaE[i] >= 0.0 && alphaE[i] <= 1.0)) {
      fail(ErrorCode::OutOfRange, "blended weights must lie in [0, 1]");
    }
    out[i] = lambda * alphaC[i] + (1.0 - lambda) * alphaE[i];
  }
  return out;
}

EnsembleCsv load_ensemble_csv(std::istream& in, const std::string& source) {
  EnsembleCsv result;
  auto& members = result.members;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    if (line_no == 1 && line.find("member") != std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    long member = -1, keypoint = -1;
    double x = 0.0, y = 0.0;
    int present = -1;
    std::string rest;
    if (!(fields >> member >> keypoint >> x >> y >> present) || (fields >> rest) || member < 0 ||
        keypoint < 0 || (present != 0 && present != 1)) {
      fail(ErrorCode::ParseError,
           source + ":" + std::to_string(line_no) + ": expected `member_id, keypoint_id, x, y, present`");
    }
    result.keypointCount = std::max(result.keypointCount, static_cast<std::size_t>(keypoint) + 1);
    if (static_cast<std::size_t>(member) >= members.size()) members.resize(static_cast<std::size_t>(member) + 1);
    if (present == 1) {
      members[static_cast<std::size_t>(member)].push_back({static_cast<std::size_t>(keypoint), {x, y}});
    }
  }
  if (members.empty()) fail(ErrorCode::EmptyEnsemble, source + ": no ensemble rows");
  return result;
}

}  // namespace otkd
