#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "otkd/geometry.hpp"

namespace otkd {

struct IdentifiedKeypoint {
  std::size_t id;
  Keypoint2D point;
};

// One ensemble member's output; `id` is the keypoint's semantic identity.
using MemberPrediction = std::vector<IdentifiedKeypoint>;

// Identity = position in the set.
MemberPrediction member_from_keypoints(const KeypointSet& keypoints);

// E member predictions aligned by keypoint identity.
struct EnsemblePrediction {
  std::size_t memberCount = 0;
  std::size_t keypointCount = 0;
  std::vector<Keypoint2D> observations;      // E x N, meaningful where present
  std::vector<std::uint8_t> presentMask;     // E x N
  std::vector<std::uint8_t> forced;          // N; 1 = no strict majority, uncertainty pinned to 1
  KeypointSet meanSet;                       // filled by estimate_uncertainty
  std::vector<double> uncertainty;           // filled by estimate_uncertainty

  bool present(std::size_t member, std::size_t keypoint) const {
    return presentMask[member * keypointCount + keypoint] != 0;
  }
  const Keypoint2D& observation(std::size_t member, std::size_t keypoint) const {
    return observations[member * keypointCount + keypoint];
  }
  std::size_t contributor_count(std::size_t keypoint) const;
};

// Keypoints seen by more than E/2 members are kept; the rest (ties included) are flagged
// so their uncertainty is forced to 1. `keypointCount` defaults to max id + 1.
EnsemblePrediction majority_vote_align(std::span<const MemberPrediction> members,
                                       std::size_t keypointCount = 0);

struct EnsembleStatistics {
  KeypointSet meanSet;
  std::vector<double> variance;   // sigma_x^2 + sigma_y^2, population (divide by contributors)
};

// Throws NoContributors if a keypoint has no contributing member.
EnsembleStatistics ensemble_statistics(const EnsemblePrediction& pred);

// u = tanh(variance / scale); entries flagged in `forced` are set to exactly 1.
std::vector<double> variance_to_uncertainty(std::span<const double> variance, double scale = 1.0,
                                            std::span<const std::uint8_t> forced = {});

// Majority vote, statistics and uncertainty in one pass.
EnsemblePrediction estimate_uncertainty(std::span<const MemberPrediction> members,
                                        double scale = 1.0, std::size_t keypointCount = 0);

// 1 - u. Throws OutOfRange if any u lies outside [0, 1].
std::vector<double> teacher_confidence(std::span<const double> u);

// M entries of 1/M. Throws ZeroCount for M == 0.
std::vector<double> student_uniform_weights(std::size_t count);

class WeightBlend {
 public:
  explicit WeightBlend(double lambda = 0.5);
  double lambda() const noexcept { return lambda_; }

 private:
  double lambda_;
};

// lambda * alphaC + (1 - lambda) * alphaE, elementwise.
std::vector<double> blend_weights(std::span<const double> alphaC, std::span<const double> alphaE,
                                  const WeightBlend& blend);

struct EnsembleCsv {
  std::vector<MemberPrediction> members;
  std::size_t keypointCount = 0;   // max keypoint_id + 1, absent rows included
};

// CSV rows `member_id, keypoint_id, x, y, present`; an optional header line is skipped.
EnsembleCsv load_ensemble_csv(std::istream& in, const std::string& source = "<ensemble>");

}  // namespace otkd
