#include "otkd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "otkd/error.hpp"
#include "otkd/log.hpp"
#include "otkd/uakd.hpp"
#include "otkd/uncertainty.hpp"

namespace otkd {

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::NoKD: return "noKD";
    case Condition::UniformOT: return "uniformOT";
    case Condition::UAKD: return "UAKD";
    case Condition::PFKD: return "PFKD";
    case Condition::UAKDPFKD: return "UAKD+PFKD";
  }
  return "?";
}

Condition parse_condition(std::string_view name) {
  for (Condition c : kAllConditions) {
    if (to_string(c) == name) return c;
  }
  fail(ErrorCode::InvalidArgument, "unknown condition '" + std::string(name) + "'");
}

void TrainingConfig::validate() const {
  for (double g : {gammaKpt, gammaDistill, gammaP, gammaF}) {
    if (!(g >= 0.0) || !std::isfinite(g)) fail(ErrorCode::InvalidArgument, "loss weights must be finite and >= 0");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");
  if (ensembleSize < 1) fail(ErrorCode::InvalidArgument, "ensemble size must be >= 1");
  if (!(learningRate > 0.0) || !std::isfinite(learningRate)) fail(ErrorCode::InvalidArgument, "learning rate must be > 0");
  if (epochs < 0) fail(ErrorCode::InvalidArgument, "epochs must be >= 0");
  if (batchSize < 1) fail(ErrorCode::InvalidArgument, "batch size must be >= 1");
  if (!(uncertaintyScale > 0.0)) fail(ErrorCode::NonpositiveScale, "uncertainty scale must be > 0");
  sinkhorn.validate();
}

LossWeights condition_weights(Condition c, const TrainingConfig& cfg, const SceneTargets& targets) {
  LossWeights w;
  w.gammaKpt = cfg.gammaKpt;
  if (c == Condition::NoKD) return w;
  w.gammaPred = cfg.gammaDistill * cfg.gammaP;
  if (c == Condition::PFKD || c == Condition::UAKDPFKD) w.gammaFeat = cfg.gammaDistill * cfg.gammaF;
  std::vector<double> existence = targets.existence;
  if (existence.empty()) {
    existence.assign(targets.teacherKeypoints.size(), 1.0 / static_cast<double>(targets.teacherKeypoints.size()));
  }
  if (c == Condition::UAKD || c == Condition::UAKDPFKD) {
    w.alphaT = blend_weights(teacher_confidence(targets.uncertainty), existence, WeightBlend(cfg.lambda));
  } else {
    w.alphaT = std::move(existence);
  }
  return w;
}

GridCell clamped_center(const Keypoint2D& keypoint, double delta, std::size_t gridSize) {
  GridCell c = region_center(keypoint, delta);
  const long hi = static_cast<long>(gridSize) - 1;
  c.row = std::clamp(c.row, 0L, hi);
  c.col = std::clamp(c.col, 0L, hi);
  return c;
}

LossEvaluation total_loss(const ToyRegressor& student, const MatrixRM& projection, const Tensor3& input,
                          const KeypointSet& labels, const SceneTargets* targets, const LossWeights& weights,
                          const SinkhornConfig& ot, SinkhornPotentials* warm, const TransportPlan* fixedPlan) {
  const ToyRegressor::Activations act = student.forward(input);
  const KeypointSet& pred = act.keypoints;
  const std::size_t m = pred.size();
  if (labels.size() != m) {
    fail(ErrorCode::DimensionMismatch, "expected " + std::to_string(m) + " labels, got " + std::to_string(labels.size()));
  }

  LossEvaluation out;
  out.prediction = pred;
  out.gradient.assign(student.parameter_count(), 0.0);
  Eigen::MatrixX2d kgrad(static_cast<Eigen::Index>(m), 2);
  for (std::size_t i = 0; i < m; ++i) {
    const double dx = pred[i].x - labels[i].x;
    const double dy = pred[i].y - labels[i].y;
    out.value.kpt += (dx * dx + dy * dy) / static_cast<double>(m);
    kgrad(static_cast<Eigen::Index>(i), 0) = weights.gammaKpt * 2.0 * dx / static_cast<double>(m);
    kgrad(static_cast<Eigen::Index>(i), 1) = weights.gammaKpt * 2.0 * dy / static_cast<double>(m);
  }

  Tensor3 featureGradient;
  if (weights.distills()) {
    if (targets == nullptr) fail(ErrorCode::InvalidArgument, "distillation terms need teacher targets");
    const KeypointSet& teacher = targets->teacherKeypoints;
    if (fixedPlan != nullptr) {
      out.plan = *fixedPlan;
    } else {
      const std::vector<double> alphaS = student_uniform_weights(m);
      out.plan = sinkhorn_unbalanced(cost_matrix(pred, teacher), alphaS, weights.alphaT, ot, warm);
    }
    out.value.pred = plan_weighted_distance(out.plan, pred, teacher);
    kgrad += weights.gammaPred * plan_weighted_distance_gradient(out.plan, pred, teacher);

    if (weights.gammaFeat != 0.0) {
      const RegressorSpec& spec = student.spec();
      const std::vector<ConvLayerSpec> head = spec.head_spec();
      const int extent = receptive_field_extent(head);
      const Tensor3& features = act.features();
      std::vector<FeatureRegion> studentRegions;
      std::vector<GridCell> centers;
      for (std::size_t i = 0; i < m; ++i) {
        centers.push_back(clamped_center(pred[i], spec.delta, spec.gridSize));
        studentRegions.push_back(extract_region(features, centers.back(), extent, i));
      }
      std::vector<FeatureRegion> adapted;
      for (const FeatureRegion& r : targets->teacherRegions) {
        adapted.push_back(adapt_region(r, features.channels(), static_cast<std::size_t>(extent),
                                       static_cast<std::size_t>(extent), projection));
      }
      const PfkdResult feat = pfkd_loss(adapted, studentRegions, out.plan);
      out.value.feat = feat.loss;
      featureGradient = Tensor3(features.channels(), features.height(), features.width());
      for (std::size_t i = 0; i < m; ++i) {
        Tensor3 g = feat.studentGradients[i];
        for (double& v : g.values()) v *= weights.gammaFeat;
        accumulate_region(featureGradient, centers[i], g);
      }
      out.projectionGradient = MatrixRM::Zero(projection.rows(), projection.cols());
      for (std::size_t j = 0; j < adapted.size(); ++j) {
        out.projectionGradient +=
            weights.gammaFeat * adapt_region_projection_gradient(targets->teacherRegions[j], feat.teacherGradients[j]);
      }
    }
  }
  if (out.projectionGradient.size() == 0) out.projectionGradient = MatrixRM::Zero(projection.rows(), projection.cols());

  out.value.total = weights.gammaKpt * out.value.kpt + weights.gammaPred * out.value.pred +
                    weights.gammaFeat * out.value.feat;
  student.backward(act, kgrad, featureGradient.size() > 0 ? &featureGradient : nullptr, out.gradient);
  return out;
}

namespace {

double mean_loss(const ToyRegressor& model, const MatrixRM& projection, std::span<const TrainingSample> samples,
                 const SinkhornConfig& ot) {
  double sum = 0.0;
  for (const TrainingSample& s : samples) {
    sum += total_loss(model, projection, *s.input, s.labels, s.targets, s.weights, ot).value.total;
  }
  return sum / static_cast<double>(samples.size());
}

}  // namespace

TrainingRun train(ToyRegressor& model, MatrixRM& projection, std::span<const TrainingSample> samples,
                  double learningRate, int epochs, std::size_t batchSize, std::uint64_t orderSeed,
                  const SinkhornConfig& ot) {
  if (samples.empty()) fail(ErrorCode::EmptySet, "no training samples");
  if (batchSize < 1) fail(ErrorCode::InvalidArgument, "batch size must be >= 1");
  TrainingRun run;
  run.initialLoss = mean_loss(model, projection, samples, ot);
  if (!std::isfinite(run.initialLoss)) fail(ErrorCode::TrainingDiverged, "initial loss is not finite");

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<SinkhornPotentials> potentials(samples.size());
  std::mt19937_64 rng(orderSeed);
  std::vector<double> grad(model.parameter_count());
  MatrixRM projGrad = MatrixRM::Zero(projection.rows(), projection.cols());

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batchSize) {
      const std::size_t end = std::min(order.size(), start + batchSize);
      std::fill(grad.begin(), grad.end(), 0.0);
      projGrad.setZero();
      for (std::size_t b = start; b < end; ++b) {
        const TrainingSample& s = samples[order[b]];
        const LossEvaluation ev =
            total_loss(model, projection, *s.input, s.labels, s.targets, s.weights, ot, &potentials[order[b]]);
        if (!std::isfinite(ev.value.total)) {
          fail(ErrorCode::TrainingDiverged, "loss became " + std::to_string(ev.value.total) + " at epoch " +
                                                std::to_string(epoch) + ", sample " + std::to_string(order[b]) +
                                                " (kpt " + std::to_string(ev.value.kpt) + ", pred " +
                                                std::to_string(ev.value.pred) + ", feat " +
                                                std::to_string(ev.value.feat) + ")");
        }
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += ev.gradient[k];
        projGrad += ev.projectionGradient;
      }
      const double step = learningRate / static_cast<double>(end - start);
      auto params = model.parameters();
      for (std::size_t k = 0; k < grad.size(); ++k) params[k] -= step * grad[k];
      projection -= step * projGrad;
      if (!std::all_of(params.begin(), params.end(), [](double p) { return std::isfinite(p); }) ||
          !projection.allFinite()) {
        fail(ErrorCode::TrainingDiverged, "parameters became non-finite at epoch " + std::to_string(epoch));
      }
    }
    run.epochs = epoch + 1;
  }
  run.finalLoss = mean_loss(model, projection, samples, ot);
  if (!std::isfinite(run.finalLoss)) fail(ErrorCode::TrainingDiverged, "final loss is not finite");
  log::debug("train: loss ", run.initialLoss, " -> ", run.finalLoss, " over ", run.epochs, " epochs");
  return run;
}

double mean_keypoint_error(const ToyRegressor& model, std::span<const Tensor3* const> inputs,
                           std::span<const KeypointSet> truth) {
  if (inputs.size() != truth.size() || inputs.empty()) {
    fail(ErrorCode::DimensionMismatch, "need one truth set per input");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const KeypointSet pred = model.predict(*inputs[s]);
    if (truth[s].size() < pred.size()) fail(ErrorCode::DimensionMismatch, "truth has fewer keypoints than the model");
    for (std::size_t i = 0; i < pred.size(); ++i) {
      sum += std::hypot(pred[i].x - truth[s][i].x, pred[i].y - truth[s][i].y);
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

MatrixRM initial_projection(std::size_t studentChannels, std::size_t teacherChannels, std::uint64_t seed) {
  if (studentChannels == 0 || teacherChannels == 0) fail(ErrorCode::InvalidArgument, "channel counts must be positive");
  MatrixRM p = MatrixRM::Zero(static_cast<Eigen::Index>(studentChannels), static_cast<Eigen::Index>(teacherChannels));
  if (teacherChannels % studentChannels == 0) {
    const std::size_t k = teacherChannels / studentChannels;
    for (std::size_t q = 0; q < k; ++q) {
      for (std::size_t s = 0; s < studentChannels; ++s) {
        p(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(q * studentChannels + s)) = 1.0 / static_cast<double>(k);
      }
    }
    return p;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1 / std::sqrt(static_cast<double>(teacherChannels)));
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = normal(rng);
  return p;
}

}  // namespace otkd
