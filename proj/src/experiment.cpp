#include "otkd/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <limits>
#include <random>
#include <chrono>
#include <cmath>
#include <functional>
#include <istream>
#include <mutex>
#include "json.hpp"
#include <ostream>
#include <sstream>
#include <thread>

#include "otkd/error.hpp"
#include "otkd/log.hpp"
#include "otkd/numfmt.hpp"
#include "otkd/pnp.hpp"
#include "otkd/simd/kernels.hpp"
#include "otkd/uncertainty.hpp"

namespace otkd {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const std::string& why) {
  fail(ErrorCode::InvalidArgument, "option " + std::string(key) + " = '" + std::string(value) + "': " + why);
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "expected a number");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "expected a non-negative integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  bad_value(key, v, "expected true/false");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    const std::string_view item = trim(v.substr(0, comma));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

struct Option {
  const char* key;
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
};

Option real_option(const char* key, double& field) {
  return {key, [key, &field](std::string_view v) { field = to_double(key, v); }, [&field] { return format_real(field); }};
}

template <typename T>
Option count_option(const char* key, T& field) {
  return {key, [key, &field](std::string_view v) { field = static_cast<T>(to_u64(key, v)); },
          [&field] { return std::to_string(field); }};
}

std::vector<Option> options(ExperimentConfig& c) {
  TrainingConfig& t = c.training;
  SceneConfig& s = c.scene;
  std::vector<Option> o;
  o.push_back(count_option("seed", c.seed));
  o.push_back(count_option("seeds", c.seedCount));
  o.push_back({"conditions",
               [&c](std::string_view v) {
                 c.conditions.clear();
                 for (auto item : split_list(v)) c.conditions.push_back(parse_condition(item));
               },
               [&c] {
                 std::string out;
                 for (Condition k : c.conditions) out += (out.empty() ? "" : ",") + std::string(to_string(k));
                 return out;
               }});
  o.push_back({"corrupt_teacher", [&c](std::string_view v) { c.corruptTeacher = to_bool("corrupt_teacher", v); },
               [&c] { return std::string(c.corruptTeacher ? "true" : "false"); }});
  o.push_back(count_option("corrupt_member", c.corruptMember));
  o.push_back({"corrupt_keypoints",
               [&c](std::string_view v) {
                 c.corruptKeypoints.clear();
                 for (auto item : split_list(v)) c.corruptKeypoints.push_back(to_u64("corrupt_keypoints", item));
               },
               [&c] {
                 std::string out;
                 for (auto k : c.corruptKeypoints) out += (out.empty() ? "" : ",") + std::to_string(k);
                 return out;
               }});
  o.push_back(real_option("corruption_sigma_px", c.corruptionSigmaPx));
  o.push_back(real_option("label_noise_px", c.labelNoisePx));
  o.push_back(count_option("teacher_keypoints", c.teacherKeypoints));
  o.push_back(count_option("student_keypoints", c.studentKeypoints));
  o.push_back(count_option("student_width", c.studentWidth));
  o.push_back(count_option("teacher_width", c.teacherWidth));
  o.push_back(count_option("student_train_scenes", c.studentTrainScenes));
  o.push_back(count_option("teacher_train_scenes", c.teacherTrainScenes));
  o.push_back(count_option("held_out_scenes", c.heldOutScenes));
  o.push_back(count_option("test_scenes", c.testScenes));
  o.push_back(real_option("teacher_learning_rate", c.teacherLearningRate));
  o.push_back(count_option("teacher_epochs", c.teacherEpochs));
  o.push_back(real_option("teacher_error_threshold_px", c.teacherErrorThresholdPx));
  o.push_back(real_option("gamma_kpt", t.gammaKpt));
  o.push_back(real_option("gamma_distill", t.gammaDistill));
  o.push_back(real_option("gamma_p", t.gammaP));
  o.push_back(real_option("gamma_f", t.gammaF));
  o.push_back(real_option("lambda", t.lambda));
  o.push_back(count_option("ensemble_size", t.ensembleSize));
  o.push_back(real_option("learning_rate", t.learningRate));
  o.push_back(count_option("epochs", t.epochs));
  o.push_back(count_option("batch_size", t.batchSize));
  o.push_back(real_option("uncertainty_scale", t.uncertaintyScale));
  o.push_back({"sinkhorn_epsilon",
               [&t](std::string_view v) {
                 if (v == "auto") t.sinkhorn.epsilon.reset();
                 else t.sinkhorn.epsilon = to_double("sinkhorn_epsilon", v);
               },
               [&t] { return t.sinkhorn.epsilon ? format_real(*t.sinkhorn.epsilon) : std::string("auto"); }});
  o.push_back(real_option("sinkhorn_epsilon_relative", t.sinkhorn.epsilonRelative));
  o.push_back({"sinkhorn_tau",
               [&t](std::string_view v) {
                 t.sinkhorn.tau = (v == "inf") ? std::numeric_limits<double>::infinity() : to_double("sinkhorn_tau", v);
               },
               [&t] { return format_real(t.sinkhorn.tau); }});
  o.push_back(count_option("sinkhorn_max_iters", t.sinkhorn.maxIters));
  o.push_back(real_option("sinkhorn_tol", t.sinkhorn.tol));
  o.push_back(real_option("image_size", s.imageSize));
  o.push_back(count_option("grid_size", s.gridSize));
  o.push_back(real_option("focal", s.focal));
  o.push_back(real_option("depth_min", s.depthMin));
  o.push_back(real_option("depth_max", s.depthMax));
  o.push_back(real_option("lateral", s.lateral));
  o.push_back(real_option("blob_sigma", s.blobSigma));
  o.push_back(real_option("input_noise", s.inputNoise));
  return o;
}

}  // namespace

void ExperimentConfig::validate() const {
  scene.validate();
  training.validate();
  if (teacherKeypoints < 1 || teacherKeypoints > 8) fail(ErrorCode::InvalidArgument, "teacher_keypoints must be in [1, 8]");
  if (studentKeypoints < 6 || studentKeypoints > 8) fail(ErrorCode::InvalidArgument, "student_keypoints must be in [6, 8]");
  if (studentWidth < 1 || teacherWidth < 1) fail(ErrorCode::InvalidArgument, "network widths must be >= 1");
  if (studentTrainScenes < 1 || teacherTrainScenes < 1 || heldOutScenes < 1 || testScenes < 1) {
    fail(ErrorCode::InvalidArgument, "scene counts must be >= 1");
  }
  if (!(labelNoisePx >= 0.0) || !(corruptionSigmaPx >= 0.0)) fail(ErrorCode::InvalidArgument, "noise levels must be >= 0");
  if (!(teacherLearningRate > 0.0) || teacherEpochs < 0) fail(ErrorCode::InvalidArgument, "invalid teacher optimizer settings");
  if (!(teacherErrorThresholdPx > 0.0)) fail(ErrorCode::InvalidArgument, "teacher error threshold must be > 0");
  if (corruptTeacher) {
    if (corruptMember >= training.ensembleSize) fail(ErrorCode::InvalidArgument, "corrupt_member outside the ensemble");
    for (auto k : corruptKeypoints) {
      if (k >= teacherKeypoints) fail(ErrorCode::InvalidArgument, "corrupt_keypoints entry outside the teacher keypoints");
    }
    if (corruptKeypoints.empty()) fail(ErrorCode::InvalidArgument, "corrupt_keypoints must not be empty");
  }
  if (seedCount < 1) fail(ErrorCode::InvalidArgument, "seeds must be >= 1");
  if (conditions.empty()) fail(ErrorCode::InvalidArgument, "no conditions selected");
}

std::vector<std::uint64_t> ExperimentConfig::run_seeds() const {
  std::vector<std::uint64_t> out;
  for (std::size_t k = 0; k < seedCount; ++k) out.push_back(seed + k);
  return out;
}

RegressorSpec ExperimentConfig::student_spec() const {
  RegressorSpec spec;
  spec.inputChannels = 8;
  spec.gridSize = scene.gridSize;
  spec.delta = scene.delta();
  spec.backbone = {ConvStage{{3, 1}, studentWidth}};
  spec.head = {ConvStage{{3, 1}, studentKeypoints}};
  return spec;
}

RegressorSpec ExperimentConfig::teacher_spec() const {
  RegressorSpec spec;
  spec.inputChannels = 8;
  spec.gridSize = scene.gridSize;
  spec.delta = scene.delta();
  spec.backbone = {ConvStage{{3, 1}, teacherWidth}};
  spec.head = {ConvStage{{5, 1}, teacherKeypoints}};
  return spec;
}

void set_experiment_option(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  for (Option& o : options(cfg)) {
    if (key == o.key) {
      o.set(trim(value));
      return;
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown option '" + std::string(key) + "'");
}

ExperimentConfig parse_experiment_config(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    const std::string where = source + ":" + std::to_string(lineNo);
    if (eq == std::string_view::npos) fail(ErrorCode::InvalidArgument, where + ": expected key = value");
    try {
      set_experiment_option(cfg, trim(view.substr(0, eq)), trim(view.substr(eq + 1)));
    } catch (const Error& e) {
      fail(ErrorCode::InvalidArgument, where + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorCode::InvalidArgument, source + ": " + e.what());
  }
  return cfg;
}

std::string experiment_config_text(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  std::string out;
  for (const Option& o : options(copy)) out += std::string(o.key) + " = " + o.get() + "\n";
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

enum Stream : std::uint64_t {
  kTeacherInit = 1,
  kTeacherData = 2,
  kTeacherHeldOut = 3,
  kTeacherOrder = 4,
  kTrainScenes = 10,
  kTestScenes = 11,
  kLabelNoise = 12,
  kCorruption = 13,
  kStudentInit = 14,
  kProjectionInit = 15,
  kStudentOrder = 16,
};

KeypointSet first_keypoints(const KeypointSet& all, std::size_t count) {
  return KeypointSet(std::vector<Keypoint2D>(all.points().begin(), all.points().begin() + static_cast<long>(count)));
}

}  // namespace

TeacherEnsemble make_teacher_ensemble(const ExperimentConfig& cfg, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) fail(ErrorCode::EmptyEnsemble, "teacher ensemble needs at least one seed");
  const Model3D model = box_model(cfg.scene.halfExtents);
  const auto trainSet = make_scenes(cfg.scene, model, cfg.teacherTrainScenes, derive_seed(cfg.seed, kTeacherData));
  const auto heldOut = make_scenes(cfg.scene, model, cfg.heldOutScenes, derive_seed(cfg.seed, kTeacherHeldOut));

  std::vector<TrainingSample> samples;
  for (const auto& s : trainSet) {
    TrainingSample sample;
    sample.input = &s.renderedFeatures;
    sample.labels = first_keypoints(s.gtKeypoints, cfg.teacherKeypoints);
    sample.weights.gammaKpt = 1.0;
    samples.push_back(std::move(sample));
  }
  std::vector<const Tensor3*> heldInputs;
  std::vector<KeypointSet> heldTruth;
  for (const auto& s : heldOut) {
    heldInputs.push_back(&s.renderedFeatures);
    heldTruth.push_back(s.gtKeypoints);
  }

  TeacherEnsemble ensemble;
  for (std::size_t e = 0; e < seeds.size(); ++e) {
    ToyRegressor teacher(cfg.teacher_spec());
    teacher.initialize(seeds[e]);
    MatrixRM unused = MatrixRM::Zero(1, 1);
    const TrainingRun run = train(teacher, unused, samples, cfg.teacherLearningRate, cfg.teacherEpochs,
                                  cfg.training.batchSize, derive_seed(seeds[e], kTeacherOrder), cfg.training.sinkhorn);
    const double err = mean_keypoint_error(teacher, heldInputs, heldTruth);
    log::info("teacher ", e, ": loss ", run.initialLoss, " -> ", run.finalLoss, ", held-out error ", err, " px");
    if (!(err < cfg.teacherErrorThresholdPx)) {
      fail(ErrorCode::TrainingDiverged, "teacher " + std::to_string(e) + " held-out error " + format_real(err) +
                                            " px is not below the threshold " +
                                            format_real(cfg.teacherErrorThresholdPx) + " px");
    }
    ensemble.heldOutErrorPx.push_back(err);
    ensemble.members.push_back(std::move(teacher));
  }

  double sum = 0.0;
  std::size_t pairs = 0;
  for (const Tensor3* input : heldInputs) {
    std::vector<KeypointSet> preds;
    for (const auto& m : ensemble.members) preds.push_back(m.predict(*input));
    for (std::size_t a = 0; a < preds.size(); ++a) {
      for (std::size_t b = a + 1; b < preds.size(); ++b) {
        for (std::size_t k = 0; k < preds[a].size(); ++k) {
          sum += std::hypot(preds[a][k].x - preds[b][k].x, preds[a][k].y - preds[b][k].y);
          ++pairs;
        }
      }
    }
  }
  ensemble.meanPairwiseDistancePx = pairs > 0 ? sum / static_cast<double>(pairs) : 0.0;
  return ensemble;
}

namespace {

struct SeedResult {
  std::vector<ReportRow> rows;
  SeedDiagnostics diagnostics;
  std::optional<std::string> failure;
};

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SeedResult run_seed(const ExperimentConfig& cfg, const TeacherEnsemble& teachers, std::uint64_t seed) {
  SeedResult result;
  result.diagnostics.seed = seed;
  const Model3D model = box_model(cfg.scene.halfExtents);
  const std::size_t m = cfg.studentKeypoints;
  const std::size_t n = cfg.teacherKeypoints;
  const auto trainScenes = make_scenes(cfg.scene, model, cfg.studentTrainScenes, derive_seed(seed, kTrainScenes));
  const auto testScenes = make_scenes(cfg.scene, model, cfg.testScenes, derive_seed(seed, kTestScenes));

  std::mt19937_64 labelRng(derive_seed(seed, kLabelNoise));
  std::normal_distribution<double> labelNoise(0.0, cfg.labelNoisePx);
  std::vector<KeypointSet> labels;
  for (const auto& s : trainScenes) {
    std::vector<Keypoint2D> pts;
    for (std::size_t i = 0; i < m; ++i) {
      const double dx = labelNoise(labelRng);
      const double dy = labelNoise(labelRng);
      pts.push_back(Keypoint2D{s.gtKeypoints[i].x + dx, s.gtKeypoints[i].y + dy});
    }
    labels.emplace_back(std::move(pts));
  }

  // Teacher targets, computed once per scene: the members are frozen.
  const RegressorSpec tspec = cfg.teacher_spec();
  const int teacherExtent = receptive_field_extent(tspec.head_spec());
  std::mt19937_64 corruptRng(derive_seed(seed, kCorruption));
  std::normal_distribution<double> corruption(0.0, cfg.corruptionSigmaPx);
  std::vector<SceneTargets> targets;
  std::vector<double> uSum(n, 0.0);
  for (const auto& s : trainScenes) {
    std::vector<ToyRegressor::Activations> acts;
    std::vector<MemberPrediction> members;
    for (std::size_t e = 0; e < teachers.members.size(); ++e) {
      acts.push_back(teachers.members[e].forward(s.renderedFeatures));
      std::vector<Keypoint2D> pts = acts.back().keypoints.points();
      if (cfg.corruptTeacher && e == cfg.corruptMember) {
        for (std::size_t k : cfg.corruptKeypoints) {
          pts[k].x += corruption(corruptRng);
          pts[k].y += corruption(corruptRng);
        }
      }
      members.push_back(member_from_keypoints(KeypointSet(std::move(pts))));
    }
    const EnsemblePrediction ens = estimate_uncertainty(members, cfg.training.uncertaintyScale, n);
    SceneTargets t;
    t.teacherKeypoints = ens.meanSet;
    t.uncertainty = ens.uncertainty;
    t.existence.assign(n, 1.0);
    std::vector<std::vector<FeatureRegion>> perMember;
    for (const auto& act : acts) {
      std::vector<FeatureRegion> regions;
      for (std::size_t k = 0; k < n; ++k) {
        regions.push_back(extract_region(act.features(), clamped_center(ens.meanSet[k], tspec.delta, tspec.gridSize),
                                         teacherExtent, k));
      }
      perMember.push_back(std::move(regions));
    }
    t.teacherRegions = aggregate_ensemble_regions(perMember);
    for (std::size_t k = 0; k < n; ++k) uSum[k] += t.uncertainty[k];
    targets.push_back(std::move(t));
  }
  auto& diag = result.diagnostics;
  for (double u : uSum) diag.meanUncertainty.push_back(u / static_cast<double>(trainScenes.size()));
  if (cfg.corruptTeacher) {
    std::vector<double> clean;
    diag.corruptedMinU = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      const bool corrupted =
          std::find(cfg.corruptKeypoints.begin(), cfg.corruptKeypoints.end(), k) != cfg.corruptKeypoints.end();
      if (corrupted) diag.corruptedMinU = std::min(diag.corruptedMinU, diag.meanUncertainty[k]);
      else clean.push_back(diag.meanUncertainty[k]);
    }
    diag.cleanMedianU = median(clean);
  } else {
    diag.corruptedMinU = 0.0;
    diag.cleanMedianU = median(diag.meanUncertainty);
  }

  ToyRegressor init(cfg.student_spec());
  init.initialize(derive_seed(seed, kStudentInit));
  const MatrixRM projectionInit =
      initial_projection(cfg.studentWidth, cfg.teacherWidth, derive_seed(seed, kProjectionInit));
  std::vector<Vec3> pnpModel(model.keypoints().begin(), model.keypoints().begin() + static_cast<long>(m));

  for (Condition condition : cfg.conditions) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<TrainingSample> samples;
    for (std::size_t i = 0; i < trainScenes.size(); ++i) {
      TrainingSample sample;
      sample.input = &trainScenes[i].renderedFeatures;
      sample.labels = labels[i];
      sample.targets = &targets[i];
      sample.weights = condition_weights(condition, cfg.training, targets[i]);
      samples.push_back(std::move(sample));
    }
    ToyRegressor student = init;
    MatrixRM projection = projectionInit;
    TrainingRun run;
    try {
      run = train(student, projection, samples, cfg.training.learningRate, cfg.training.epochs, cfg.training.batchSize,
                  derive_seed(seed, kStudentOrder), cfg.training.sinkhorn);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TrainingDiverged) throw;
      result.failure = "seed " + std::to_string(seed) + ", " + std::string(to_string(condition)) + ": " + e.what();
      return result;
    }

    ReportRow row;
    row.condition = condition;
    row.seed = seed;
    row.epochs = run.epochs;
    row.initialLoss = run.initialLoss;
    row.finalLoss = run.finalLoss;
    double errSum = 0.0;
    double eR = 0.0;
    double eT = 0.0;
    std::size_t hits = 0;
    std::size_t solved = 0;
    for (const auto& s : testScenes) {
      const KeypointSet pred = student.predict(s.renderedFeatures);
      for (std::size_t i = 0; i < m; ++i) errSum += std::hypot(pred[i].x - s.gtKeypoints[i].x, pred[i].y - s.gtKeypoints[i].y);
      try {
        const PnpResult pnp = pnp_solve(Correspondences{pred, pnpModel, s.cam, std::nullopt});
        if (add_01d_hit(model, pnp.pose, s.gtPose)) ++hits;
        eR += rotation_error_deg(pnp.pose, s.gtPose);
        eT += translation_error(pnp.pose, s.gtPose);
        ++solved;
      } catch (const Error& e) {
        ++row.pnpFailures;
        log::debug("pnp failed on a test scene: ", e.what());
      }
    }
    const auto scenes = static_cast<double>(testScenes.size());
    row.kptErrPx = errSum / (scenes * static_cast<double>(m));
    row.add01dRate = static_cast<double>(hits) / scenes;
    row.eRDeg = solved > 0 ? eR / static_cast<double>(solved) : std::numeric_limits<double>::quiet_NaN();
    row.eTM = solved > 0 ? eT / static_cast<double>(solved) : std::numeric_limits<double>::quiet_NaN();
    row.wallMs = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    log::info("seed ", seed, " ", to_string(condition), ": kpt error ", row.kptErrPx, " px, loss ", run.initialLoss,
              " -> ", run.finalLoss);
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, std::size_t jobs) {
  cfg.validate();
  ExperimentReport report;
  std::vector<std::uint64_t> teacherSeeds;
  for (std::size_t e = 0; e < cfg.training.ensembleSize; ++e) teacherSeeds.push_back(derive_seed(cfg.seed, kTeacherInit, e));
  TeacherEnsemble teachers;
  try {
    teachers = make_teacher_ensemble(cfg, teacherSeeds);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TrainingDiverged) throw;
    report.failure = e.what();
    return report;
  }
  report.teacherHeldOutErrorPx = teachers.heldOutErrorPx;
  report.teacherPairwiseDistancePx = teachers.meanPairwiseDistancePx;

  const std::vector<std::uint64_t> seeds = cfg.run_seeds();
  std::vector<std::optional<SeedResult>> results(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::size_t next = 0;
  std::mutex mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t k = 0;
      {
        std::lock_guard lock(mutex);
        if (next >= seeds.size()) return;
        k = next++;
      }
      try {
        results[k] = run_seed(cfg, teachers, seeds[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, seeds.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    if (errors[k]) std::rethrow_exception(errors[k]);
    SeedResult& r = *results[k];
    report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
    report.diagnostics.push_back(r.diagnostics);
    if (r.failure && !report.failure) report.failure = r.failure;
  }
  return report;
}

void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  out << "condition,seed,kpt_err_px,add01d_rate,e_r_deg,e_t_m,epochs,wall_ms\n";
  for (const ReportRow& r : report.rows) {
    out << to_string(r.condition) << ',' << r.seed << ',' << format_real(r.kptErrPx) << ','
        << format_real(r.add01dRate) << ',' << format_real(r.eRDeg) << ',' << format_real(r.eTM) << ',' << r.epochs
        << ',' << format_real(std::round(r.wallMs * 1000.0) / 1000.0) << '\n';
  }
}

namespace {

nlohmann::json mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
  return {{"mean", mean}, {"std", sd}};
}

}  // namespace

std::string report_summary_json(const ExperimentReport& report, const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json conditions = nlohmann::ordered_json::object();
  for (Condition c : cfg.conditions) {
    std::vector<double> err, add, er, et, loss0, loss1;
    for (const ReportRow& r : report.rows) {
      if (r.condition != c) continue;
      err.push_back(r.kptErrPx);
      add.push_back(r.add01dRate);
      er.push_back(r.eRDeg);
      et.push_back(r.eTM);
      loss0.push_back(r.initialLoss);
      loss1.push_back(r.finalLoss);
    }
    if (err.empty()) continue;
    conditions[std::string(to_string(c))] = {{"runs", err.size()},
                                             {"kpt_err_px", mean_std(err)},
                                             {"add01d_rate", mean_std(add)},
                                             {"e_r_deg", mean_std(er)},
                                             {"e_t_m", mean_std(et)},
                                             {"initial_loss", mean_std(loss0)},
                                             {"final_loss", mean_std(loss1)}};
  }
  j["conditions"] = conditions;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const ReportRow& r : report.rows) {
    runs.push_back({{"condition", to_string(r.condition)},
                    {"seed", r.seed},
                    {"initial_loss", r.initialLoss},
                    {"final_loss", r.finalLoss},
                    {"pnp_failures", r.pnpFailures}});
  }
  j["runs"] = runs;
  nlohmann::ordered_json diags = nlohmann::ordered_json::array();
  for (const SeedDiagnostics& d : report.diagnostics) {
    diags.push_back({{"seed", d.seed},
                     {"mean_uncertainty", d.meanUncertainty},
                     {"corrupted_min_u", d.corruptedMinU},
                     {"clean_median_u", d.cleanMedianU}});
  }
  j["uncertainty"] = diags;
  j["teachers"] = {{"held_out_error_px", report.teacherHeldOutErrorPx},
                   {"mean_pairwise_distance_px", report.teacherPairwiseDistancePx}};
  if (report.failure) j["failure"] = *report.failure;
  return j.dump(2) + "\n";
}

std::string manifest_json(const ExperimentConfig& cfg) {
  const std::string text = experiment_config_text(cfg);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  nlohmann::ordered_json j;
  j["version"] = OTKD_VERSION;
  j["base_seed"] = cfg.seed;
  j["seeds"] = cfg.run_seeds();
  j["config_hash"] = std::string("fnv1a64:") + hash;
  j["simd"] = simd::active_kernels().name;
  nlohmann::ordered_json settings = nlohmann::ordered_json::object();
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    settings[line.substr(0, eq)] = line.substr(eq + 3);
  }
  j["config"] = settings;
  return j.dump(2) + "\n";
}

}  // namespace otkd
