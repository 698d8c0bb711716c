#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "otkd/regressor.hpp"
#include "otkd/scene.hpp"
#include "otkd/training.hpp"

namespace otkd {

struct ExperimentConfig {
  SceneConfig scene;
  TrainingConfig training;
  std::size_t teacherKeypoints = 8;     // N, first N box corners
  std::size_t studentKeypoints = 8;     // M, first M box corners
  std::size_t studentWidth = 6;
  std::size_t teacherWidth = 12;
  std::size_t studentTrainScenes = 16;
  std::size_t teacherTrainScenes = 64;
  std::size_t heldOutScenes = 32;
  std::size_t testScenes = 32;
  double labelNoisePx = 2.0;
  double teacherLearningRate = 0.02;
  int teacherEpochs = 60;
  double teacherErrorThresholdPx = 2.0;
  bool corruptTeacher = false;
  std::size_t corruptMember = 0;
  std::vector<std::size_t> corruptKeypoints = {1, 6};
  double corruptionSigmaPx = 8.0;
  std::uint64_t seed = 1;               // every random stream is derived from this
  std::size_t seedCount = 3;
  std::vector<Condition> conditions = {kAllConditions.begin(), kAllConditions.end()};

  void validate() const;
  std::vector<std::uint64_t> run_seeds() const;
  RegressorSpec student_spec() const;
  RegressorSpec teacher_spec() const;
};

// `key = value` lines; '#' starts a comment. Unknown keys and out-of-range values throw
// InvalidArgument naming source:line.
ExperimentConfig parse_experiment_config(std::istream& in, const std::string& source = "<config>");
// Throws InvalidArgument for unknown keys or malformed values.
void set_experiment_option(ExperimentConfig& cfg, std::string_view key, std::string_view value);
// Canonical `key = value` listing of every option, in a fixed order.
std::string experiment_config_text(const ExperimentConfig& cfg);
std::uint64_t fnv1a64(std::string_view bytes);

struct TeacherEnsemble {
  std::vector<ToyRegressor> members;
  std::vector<double> heldOutErrorPx;
  double meanPairwiseDistancePx = 0.0;   // between members' held-out predictions
};

// Trains E teachers on clean labels from different initializations. Throws TrainingDiverged
// when a member misses the held-out error threshold.
TeacherEnsemble make_teacher_ensemble(const ExperimentConfig& cfg, std::span<const std::uint64_t> seeds);

struct ReportRow {
  Condition condition = Condition::NoKD;
  std::uint64_t seed = 0;
  double kptErrPx = 0.0;
  double add01dRate = 0.0;
  double eRDeg = 0.0;
  double eTM = 0.0;
  int epochs = 0;
  double wallMs = 0.0;
  double initialLoss = 0.0;
  double finalLoss = 0.0;
  std::size_t pnpFailures = 0;
};

struct SeedDiagnostics {
  std::uint64_t seed = 0;
  std::vector<double> meanUncertainty;   // per teacher keypoint, averaged over training scenes
  double corruptedMinU = 0.0;
  double cleanMedianU = 0.0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::vector<SeedDiagnostics> diagnostics;
  std::vector<double> teacherHeldOutErrorPx;
  double teacherPairwiseDistancePx = 0.0;
  std::optional<std::string> failure;    // set when training diverged; rows hold what finished
};

// Runs every configured condition for every seed. Seeds are independent and may be spread
// over `jobs` threads; the report order does not depend on it.
ExperimentReport run_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1);

// `condition, seed, kpt_err_px, add01d_rate, e_r_deg, e_t_m, epochs, wall_ms`
void write_report_csv(std::ostream& out, const ExperimentReport& report);
// Per-condition means and standard deviations plus per-run diagnostics.
std::string report_summary_json(const ExperimentReport& report, const ExperimentConfig& cfg);
std::string manifest_json(const ExperimentConfig& cfg);

}  // namespace otkd
