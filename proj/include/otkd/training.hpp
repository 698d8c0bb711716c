#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "otkd/pfkd.hpp"
#include "otkd/regressor.hpp"
#include "otkd/sinkhorn.hpp"

namespace otkd {

enum class Condition { NoKD, UniformOT, UAKD, PFKD, UAKDPFKD };

inline constexpr std::array<Condition, 5> kAllConditions = {Condition::NoKD, Condition::UniformOT, Condition::UAKD,
                                                            Condition::PFKD, Condition::UAKDPFKD};

std::string_view to_string(Condition c);
// Accepts the names printed by to_string. Throws InvalidArgument.
Condition parse_condition(std::string_view name);

struct TrainingConfig {
  double gammaKpt = 1.0;
  double gammaDistill = 1.0;
  double gammaP = 5.0;
  double gammaF = 0.1;
  double lambda = 0.5;
  std::size_t ensembleSize = 4;
  double learningRate = 0.05;
  int epochs = 60;
  std::size_t batchSize = 4;
  std::uint64_t seed = 1;
  double uncertaintyScale = 1.0;   // px^2; u = tanh(variance / scale)
  SinkhornConfig sinkhorn;

  void validate() const;
};

// Frozen-teacher quantities for one training scene.
struct SceneTargets {
  KeypointSet teacherKeypoints;               // ensemble mean, N keypoints
  std::vector<double> uncertainty;            // N
  std::vector<double> existence;              // N
  std::vector<FeatureRegion> teacherRegions;  // ensemble-averaged, not yet adapted
};

// Coefficients of gammaKpt * L_kpt + gammaPred * L_pred + gammaFeat * L_feat.
struct LossWeights {
  double gammaKpt = 1.0;
  double gammaPred = 0.0;
  double gammaFeat = 0.0;
  std::vector<double> alphaT;   // teacher marginal; empty when no distillation term is active

  bool distills() const { return gammaPred != 0.0 || gammaFeat != 0.0; }
};

// Condition-specific weights: noKD drops the distillation terms, uniform-OT and PFKD weight
// teachers by existence only, UAKD blends confidence 1 - u with existence.
LossWeights condition_weights(Condition c, const TrainingConfig& cfg, const SceneTargets& targets);

struct LossValue {
  double total = 0.0;
  double kpt = 0.0;
  double pred = 0.0;
  double feat = 0.0;
};

struct LossEvaluation {
  LossValue value;
  std::vector<double> gradient;     // w.r.t. student parameters
  MatrixRM projectionGradient;      // w.r.t. the teacher-to-student channel projection
  TransportPlan plan;               // student-major; empty without distillation
  KeypointSet prediction;
};

// L_kpt is the mean squared pixel error over the M student keypoints against `labels`.
// The plan is detached; pass `fixedPlan` to evaluate with a given plan instead of solving.
LossEvaluation total_loss(const ToyRegressor& student, const MatrixRM& projection, const Tensor3& input,
                          const KeypointSet& labels, const SceneTargets* targets, const LossWeights& weights,
                          const SinkhornConfig& ot, SinkhornPotentials* warm = nullptr,
                          const TransportPlan* fixedPlan = nullptr);

// Center of a region on the feature grid, clamped so it always lies on the map.
GridCell clamped_center(const Keypoint2D& keypoint, double delta, std::size_t gridSize);

struct TrainingSample {
  const Tensor3* input = nullptr;
  KeypointSet labels;
  const SceneTargets* targets = nullptr;
  LossWeights weights;
};

struct TrainingRun {
  double initialLoss = 0.0;   // mean total loss before the first update
  double finalLoss = 0.0;     // mean total loss after the last epoch
  int epochs = 0;
};

// Minibatch gradient descent with a fixed step; the batch order is drawn from `orderSeed`.
// `projection` is updated alongside the student when a feature term is active.
// Throws TrainingDiverged on a non-finite loss.
TrainingRun train(ToyRegressor& model, MatrixRM& projection, std::span<const TrainingSample> samples,
                  double learningRate, int epochs, std::size_t batchSize, std::uint64_t orderSeed,
                  const SinkhornConfig& ot);

// Mean pixel distance between predicted and true keypoints (first M of the truth).
double mean_keypoint_error(const ToyRegressor& model, std::span<const Tensor3* const> inputs,
                           std::span<const KeypointSet> truth);

// Initial projection: [I I ... I] / k when C_T = k C_S, otherwise small random entries.
MatrixRM initial_projection(std::size_t studentChannels, std::size_t teacherChannels, std::uint64_t seed);

}  // namespace otkd
