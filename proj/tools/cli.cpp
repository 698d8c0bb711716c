#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "otkd/error.hpp"
#include "otkd/experiment.hpp"
#include "otkd/log.hpp"
#include "otkd/numfmt.hpp"
#include "otkd/pfkd.hpp"
#include "otkd/pnp.hpp"
#include "otkd/scene.hpp"
#include "otkd/sinkhorn.hpp"
#include "otkd/uncertainty.hpp"

namespace otkd::cli {

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kDegenerate = 2;
constexpr int kDiverged = 3;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_number(std::string_view text, double& out) {
  text = trim(text);
  if (text == "inf" || text == "+inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && !text.empty();
}

std::vector<double> parse_row(std::string_view line, const std::string& where) {
  std::vector<double> row;
  std::size_t field = 0;
  while (true) {
    const auto comma = line.find(',');
    const std::string_view cell = trim(line.substr(0, comma));
    ++field;
    double v = 0.0;
    if (!parse_number(cell, v)) {
      fail(ErrorCode::ParseError, where + ": field " + std::to_string(field) + " ('" + std::string(cell) +
                                      "') is not a number");
    }
    row.push_back(v);
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return row;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, path + ": cannot open");
  return in;
}

struct NumericCsv {
  std::vector<std::vector<double>> rows;
  std::vector<int> lineNumbers;
};

// Numeric CSV; blank lines and '#' comments are skipped.
NumericCsv read_numeric_csv(const std::string& path) {
  std::ifstream in = open_input(path);
  NumericCsv csv;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    csv.rows.push_back(parse_row(view, path + ":" + std::to_string(lineNo)));
    csv.lineNumbers.push_back(lineNo);
  }
  return csv;
}

MatrixRM read_matrix(const std::string& path) {
  const NumericCsv csv = read_numeric_csv(path);
  if (csv.rows.empty()) fail(ErrorCode::ParseError, path + ": no rows");
  const std::size_t cols = csv.rows[0].size();
  MatrixRM m(static_cast<Eigen::Index>(csv.rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    if (csv.rows[r].size() != cols) {
      fail(ErrorCode::ParseError, path + ":" + std::to_string(csv.lineNumbers[r]) + ": expected " +
                                      std::to_string(cols) + " fields, found " + std::to_string(csv.rows[r].size()));
    }
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = csv.rows[r][c];
  }
  return m;
}

// A weight vector given as one row or one column.
std::vector<double> read_vector(const std::string& path) {
  const NumericCsv csv = read_numeric_csv(path);
  std::vector<double> v;
  for (const auto& row : csv.rows) v.insert(v.end(), row.begin(), row.end());
  if (v.empty()) fail(ErrorCode::ParseError, path + ": no values");
  if (csv.rows.size() > 1 && csv.rows[0].size() > 1) fail(ErrorCode::ParseError, path + ": expected a single row or column");
  return v;
}

CameraIntrinsics read_camera(const std::string& path) {
  std::ifstream in = open_input(path);
  double fx = std::nan(""), fy = std::nan(""), cx = std::nan(""), cy = std::nan("");
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineNo);
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) fail(ErrorCode::ParseError, where + ": expected key = value");
    const std::string_view key = trim(view.substr(0, eq));
    double value = 0.0;
    if (!parse_number(view.substr(eq + 1), value)) fail(ErrorCode::ParseError, where + ": value is not a number");
    if (key == "fx") fx = value;
    else if (key == "fy") fy = value;
    else if (key == "cx") cx = value;
    else if (key == "cy") cy = value;
    else fail(ErrorCode::ParseError, where + ": unknown camera key '" + std::string(key) + "'");
  }
  if (std::isnan(fx) || std::isnan(fy) || std::isnan(cx) || std::isnan(cy)) {
    fail(ErrorCode::ParseError, path + ": camera needs fx, fy, cx and cy");
  }
  return CameraIntrinsics(fx, fy, cx, cy);
}

struct CorrespondenceFile {
  std::vector<Keypoint2D> image;
  std::vector<Vec3> model;
  std::vector<double> weights;
  bool weighted = false;
  std::optional<Mat3> gtRotation;
  std::optional<Vec3> gtTranslation;
};

CorrespondenceFile read_correspondences(const std::string& path) {
  std::ifstream in = open_input(path);
  CorrespondenceFile file;
  std::string line;
  int lineNo = 0;
  bool sawData = false;
  while (std::getline(in, line)) {
    ++lineNo;
    const std::string where = path + ":" + std::to_string(lineNo);
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      view = trim(view.substr(1));
      const auto space = view.find_first_of(" \t");
      const std::string_view tag = view.substr(0, space);
      if (tag != "gt_rotation" && tag != "gt_translation") continue;
      const std::vector<double> values = parse_row(trim(view.substr(space)), where);
      if (tag == "gt_rotation") {
        if (values.size() != 9) fail(ErrorCode::ParseError, where + ": gt_rotation needs 9 values");
        Mat3 r;
        for (int k = 0; k < 9; ++k) r(k / 3, k % 3) = values[static_cast<std::size_t>(k)];
        file.gtRotation = r;
      } else {
        if (values.size() != 3) fail(ErrorCode::ParseError, where + ": gt_translation needs 3 values");
        file.gtTranslation = Vec3(values[0], values[1], values[2]);
      }
      continue;
    }
    if (!sawData && std::isalpha(static_cast<unsigned char>(view.front()))) {
      sawData = true;   // header line
      continue;
    }
    sawData = true;
    const std::vector<double> row = parse_row(view, where);
    if (row.size() != 5 && row.size() != 6) {
      fail(ErrorCode::ParseError, where + ": expected u,v,X,Y,Z[,w], found " + std::to_string(row.size()) + " fields");
    }
    if (!file.image.empty() && (row.size() == 6) != file.weighted) {
      fail(ErrorCode::ParseError, where + ": weights must be given on every row or none");
    }
    file.weighted = row.size() == 6;
    file.image.push_back(Keypoint2D{row[0], row[1]});
    file.model.emplace_back(row[2], row[3], row[4]);
    if (file.weighted) file.weights.push_back(row[5]);
  }
  return file;
}

std::string join_reals(std::initializer_list<double> values) {
  std::string out;
  for (double v : values) out += (out.empty() ? "" : ",") + format_real(v);
  return out;
}

void add_common(CLI::App* app) { app->set_version_flag("--version", std::string(OTKD_VERSION)); }

int cmd_sinkhorn(const std::string& costPath, const std::string& alphaSPath, const std::string& alphaTPath,
                 const SinkhornConfig& cfg, bool squared, std::ostream& out) {
  MatrixRM entries = read_matrix(costPath);
  if (squared) entries = entries.array().square().matrix();
  const std::vector<double> alphaS = read_vector(alphaSPath);
  const std::vector<double> alphaT = read_vector(alphaTPath);
  if (alphaS.size() != static_cast<std::size_t>(entries.rows()) ||
      alphaT.size() != static_cast<std::size_t>(entries.cols())) {
    fail(ErrorCode::DimensionMismatch, "cost is " + std::to_string(entries.rows()) + "x" +
                                           std::to_string(entries.cols()) + " but weights have " +
                                           std::to_string(alphaS.size()) + " and " + std::to_string(alphaT.size()) +
                                           " entries");
  }
  const CostMatrix cost(std::move(entries));
  const TransportPlan plan = sinkhorn_unbalanced(cost, alphaS, alphaT, cfg);
  const PlanResiduals res = plan_residuals(plan, alphaS, alphaT);
  write_plan_csv(out, plan);
  out << "# row_residual " << format_real(res.row) << "\n";
  out << "# col_residual " << format_real(res.col) << "\n";
  out << "# transport_cost " << format_real(plan.transport_cost(cost)) << "\n";
  out << "# iterations " << plan.iterations << "\n";
  out << "# converged " << (plan.converged ? "true" : "false") << "\n";
  return plan.converged ? kOk : kDegenerate;
}

int cmd_pnp(const std::string& corrPath, const std::string& camPath, int maxIters, double tol, std::ostream& out) {
  const CorrespondenceFile file = read_correspondences(corrPath);
  Correspondences c{KeypointSet(file.image), file.model, read_camera(camPath), std::nullopt};
  if (file.weighted) c.weights = file.weights;
  const PnpResult result = pnp_solve(c, maxIters, tol);
  const Mat3& r = result.pose.rotation();
  const Vec3& t = result.pose.translation();
  out << "rotation " << join_reals({r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)}) << "\n";
  out << "translation " << join_reals({t.x(), t.y(), t.z()}) << "\n";
  out << "rms_px " << format_real(result.rms) << "\n";
  out << "iterations " << result.iterations << "\n";
  out << "converged " << (result.converged ? "true" : "false") << "\n";
  if (file.gtRotation && file.gtTranslation) {
    const Pose gt(project_to_so3(*file.gtRotation), *file.gtTranslation);
    out << "rotation_error_deg " << format_real(rotation_error_deg(result.pose, gt)) << "\n";
    out << "translation_error_m " << format_real(translation_error(result.pose, gt)) << "\n";
  }
  return result.converged ? kOk : kDegenerate;
}

int cmd_make_pnp_case(std::uint64_t seed, std::size_t count, double noise, const std::string& outPath,
                      const std::string& camPath) {
  if (count < 1) fail(ErrorCode::InvalidArgument, "--count must be >= 1");
  const SceneConfig scene;
  std::mt19937_64 rng(derive_seed(seed, 100));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> pixelNoise(0.0, 1.0);
  std::vector<Vec3> points;
  for (std::size_t i = 0; i < count; ++i) {
    points.push_back(scene.halfExtents.cwiseProduct(Vec3(unit(rng), unit(rng), unit(rng))));
  }
  const Pose pose = random_pose(scene, rng);
  const CameraIntrinsics cam = scene.camera();
  const KeypointSet image = project_points(points, pose, cam);

  std::ofstream out(outPath);
  if (!out) fail(ErrorCode::InvalidArgument, outPath + ": cannot write");
  const Mat3& r = pose.rotation();
  const Vec3& t = pose.translation();
  out << "# gt_rotation " << join_reals({r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)}) << "\n";
  out << "# gt_translation " << join_reals({t.x(), t.y(), t.z()}) << "\n";
  out << "u,v,X,Y,Z\n";
  for (std::size_t i = 0; i < count; ++i) {
    const double u = image[i].x + (noise > 0.0 ? noise * pixelNoise(rng) : 0.0);
    const double v = image[i].y + (noise > 0.0 ? noise * pixelNoise(rng) : 0.0);
    out << join_reals({u, v, points[i].x(), points[i].y(), points[i].z()}) << "\n";
  }
  std::ofstream camOut(camPath);
  if (!camOut) fail(ErrorCode::InvalidArgument, camPath + ": cannot write");
  camOut << "fx = " << format_real(cam.fx) << "\nfy = " << format_real(cam.fy) << "\ncx = " << format_real(cam.cx)
         << "\ncy = " << format_real(cam.cy) << "\n";
  return kOk;
}

int cmd_ensemble(const std::string& path, double scale, double lambda, std::ostream& out) {
  std::ifstream in = open_input(path);
  const EnsembleCsv csv = load_ensemble_csv(in, path);
  const EnsemblePrediction pred = estimate_uncertainty(csv.members, scale, csv.keypointCount);
  const std::vector<double> confidence = teacher_confidence(pred.uncertainty);
  const std::vector<double> existence(pred.keypointCount, 1.0);
  const std::vector<double> alpha = blend_weights(confidence, existence, WeightBlend(lambda));
  out << "keypoint,x,y,contributors,u,alpha_t\n";
  for (std::size_t k = 0; k < pred.keypointCount; ++k) {
    out << k << ',' << format_real(pred.meanSet[k].x) << ',' << format_real(pred.meanSet[k].y) << ','
        << pred.contributor_count(k) << ',' << format_real(pred.uncertainty[k]) << ',' << format_real(alpha[k]) << "\n";
  }
  return kOk;
}

std::vector<ConvLayerSpec> parse_layers(const std::string& text) {
  // kernel[/stride] entries separated by commas, e.g. 3/2,3,1
  std::vector<ConvLayerSpec> layers;
  std::string_view view = text;
  while (!view.empty()) {
    const auto comma = view.find(',');
    const std::string_view item = trim(view.substr(0, comma));
    const auto slash = item.find('/');
    ConvLayerSpec spec;
    auto parse_int = [&](std::string_view s, int& v) {
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        fail(ErrorCode::ParseError, "--layers: '" + std::string(item) + "' is not kernel[/stride]");
      }
    };
    parse_int(item.substr(0, slash), spec.kernel);
    if (slash != std::string_view::npos) parse_int(item.substr(slash + 1), spec.stride);
    layers.push_back(spec);
    if (comma == std::string_view::npos) break;
    view.remove_prefix(comma + 1);
  }
  return layers;
}

int cmd_region(const std::string& mapPath, double x, double y, int extent, std::ostream& out) {
  std::ifstream in(mapPath, std::ios::binary);
  if (!in) fail(ErrorCode::ParseError, mapPath + ": cannot open");
  const FeatureMap fmap = read_feature_map(in, mapPath);
  const GridCell center = region_center(Keypoint2D{x, y}, fmap.delta);
  const FeatureRegion region = extract_region(fmap, center, extent);
  out << "# center_row " << center.row << "\n# center_col " << center.col << "\n";
  for (std::size_t c = 0; c < region.data.channels(); ++c) {
    for (std::size_t r = 0; r < region.data.height(); ++r) {
      for (std::size_t k = 0; k < region.data.width(); ++k) {
        out << (k ? "," : "") << format_real(region.data(c, r, k));
      }
      out << "\n";
    }
    if (c + 1 < region.data.channels()) out << "\n";
  }
  return kOk;
}

int cmd_experiment(const std::string& configPath, const std::vector<std::string>& sets,
                   const std::vector<std::pair<std::string, std::string>>& flags, std::optional<std::uint64_t> seed,
                   std::size_t jobs, const std::string& outDir, std::ostream& out) {
  ExperimentConfig cfg;
  if (!configPath.empty()) {
    std::ifstream in = open_input(configPath);
    cfg = parse_experiment_config(in, configPath);
  }
  for (const auto& [key, value] : flags) set_experiment_option(cfg, key, value);
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidArgument, "--set expects key=value, got '" + s + "'");
    set_experiment_option(cfg, trim(std::string_view(s).substr(0, eq)), trim(std::string_view(s).substr(eq + 1)));
  }
  if (seed) cfg.seed = *seed;
  cfg.validate();
  if (jobs < 1) fail(ErrorCode::InvalidArgument, "--jobs must be >= 1");

  std::filesystem::create_directories(outDir);
  {
    std::ofstream manifest(std::filesystem::path(outDir) / "manifest.json");
    manifest << manifest_json(cfg);
  }
  const ExperimentReport report = run_experiment(cfg, jobs);
  {
    std::ofstream csv(std::filesystem::path(outDir) / "report.csv");
    write_report_csv(csv, report);
  }
  {
    std::ofstream summary(std::filesystem::path(outDir) / "summary.json");
    summary << report_summary_json(report, cfg);
  }
  out << "wrote " << report.rows.size() << " rows to " << (std::filesystem::path(outDir) / "report.csv").string() << "\n";
  if (report.failure) {
    log::error("training diverged: ", *report.failure);
    return kDiverged;
  }
  return kOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::DegenerateConfiguration:
    case ErrorCode::PointBehindCamera:
      return kDegenerate;
    case ErrorCode::TrainingDiverged:
      return kDiverged;
    default:
      return kUsage;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Uncertainty-aware keypoint distillation toolkit", "otkd"};
  add_common(&app);
  app.require_subcommand(1);

  // sinkhorn
  auto* sink = app.add_subcommand("sinkhorn", "Solve an unbalanced OT problem given cost and marginal files");
  add_common(sink);
  std::string costPath, alphaSPath, alphaTPath;
  SinkhornConfig sinkCfg;
  double epsilon = 0.0;
  std::string tauText = "10";
  bool squared = false;
  bool noScaling = false;
  sink->add_option("--cost", costPath, "Cost matrix CSV (rows: student, columns: teacher)")->required()->check(CLI::ExistingFile);
  sink->add_option("--alpha-s", alphaSPath, "Student marginal CSV")->required()->check(CLI::ExistingFile);
  sink->add_option("--alpha-t", alphaTPath, "Teacher marginal CSV")->required()->check(CLI::ExistingFile);
  auto* epsOpt = sink->add_option("--epsilon", epsilon, "Absolute entropic strength");
  sink->add_option("--epsilon-relative", sinkCfg.epsilonRelative, "Entropic strength relative to the mean cost")->capture_default_str();
  sink->add_option("--tau", tauText, "Marginal KL penalty (inf for balanced OT)")->capture_default_str();
  sink->add_option("--max-iters", sinkCfg.maxIters, "Iteration cap")->capture_default_str();
  sink->add_option("--tol", sinkCfg.tol, "Convergence tolerance on log-scaling changes")->capture_default_str();
  sink->add_flag("--squared", squared, "Square the cost entries before solving");
  sink->add_flag("--no-epsilon-scaling", noScaling, "Disable epsilon annealing");

  // pnp
  auto* pnp = app.add_subcommand("pnp", "Estimate a pose from 2D-3D correspondences");
  add_common(pnp);
  std::string corrPath, camPath;
  int pnpIters = 100;
  double pnpTol = 1e-10;
  pnp->add_option("--correspondences", corrPath, "CSV rows u,v,X,Y,Z[,w]")->required()->check(CLI::ExistingFile);
  pnp->add_option("--camera", camPath, "key = value file with fx, fy, cx, cy")->required()->check(CLI::ExistingFile);
  pnp->add_option("--max-iters", pnpIters, "Gauss-Newton iteration cap")->capture_default_str();
  pnp->add_option("--tol", pnpTol, "Step-norm tolerance")->capture_default_str();

  // make-pnp-case
  auto* mk = app.add_subcommand("make-pnp-case", "Write a synthetic correspondence file with its ground truth");
  add_common(mk);
  std::uint64_t mkSeed = 1;
  std::size_t mkCount = 10;
  double mkNoise = 0.0;
  std::string mkOut, mkCam;
  mk->add_option("--seed", mkSeed, "Random seed")->capture_default_str();
  mk->add_option("--count", mkCount, "Number of correspondences")->capture_default_str();
  mk->add_option("--noise", mkNoise, "Gaussian pixel noise (standard deviation)")->capture_default_str();
  mk->add_option("--out", mkOut, "Correspondence CSV to write")->required();
  mk->add_option("--camera-out", mkCam, "Camera file to write")->required();

  // ensemble
  auto* ens = app.add_subcommand("ensemble", "Per-keypoint ensemble mean, uncertainty and teacher weight");
  add_common(ens);
  std::string ensPath;
  double ensScale = 1.0;
  double ensLambda = 0.5;
  ens->add_option("--predictions", ensPath, "CSV rows member_id,keypoint_id,x,y,present")->required()->check(CLI::ExistingFile);
  ens->add_option("--scale", ensScale, "Variance scale of u = tanh(var / scale)")->capture_default_str();
  ens->add_option("--lambda", ensLambda, "Confidence / existence blend")->capture_default_str();

  // receptive-field
  auto* rf = app.add_subcommand("receptive-field", "Receptive-field extent of a conv head");
  add_common(rf);
  std::string layersText;
  rf->add_option("--layers", layersText, "kernel[/stride] list, e.g. 3/2,3")->required();

  // region
  auto* reg = app.add_subcommand("region", "Extract the feature region traced from a keypoint");
  add_common(reg);
  std::string mapPath;
  double kx = 0.0, ky = 0.0;
  int extent = 3;
  reg->add_option("--feature-map", mapPath, "Binary feature-map file")->required()->check(CLI::ExistingFile);
  reg->add_option("--x", kx, "Keypoint x (pixels)")->required();
  reg->add_option("--y", ky, "Keypoint y (pixels)")->required();
  reg->add_option("--extent", extent, "Region extent")->capture_default_str();

  // experiment
  auto* exp = app.add_subcommand("experiment", "Train students under every distillation condition and report");
  add_common(exp);
  std::string configPath, outDir;
  std::vector<std::string> sets;
  std::uint64_t expSeed = 0;
  std::size_t jobs = 1;
  exp->add_option("--config", configPath, "key = value configuration file")->check(CLI::ExistingFile);
  exp->add_option("--out", outDir, "Output directory")->required();
  auto* seedOpt = exp->add_option("--seed", expSeed, "Base seed; every random stream derives from it");
  exp->add_option("--jobs", jobs, "Seeds trained in parallel")->capture_default_str();
  exp->add_option("--set", sets, "Override a configuration key (key=value), repeatable");
  const std::vector<std::pair<std::string, std::string>> flagKeys = {
      {"--seeds", "seeds"},
      {"--epochs", "epochs"},
      {"--learning-rate", "learning_rate"},
      {"--batch-size", "batch_size"},
      {"--gamma-kpt", "gamma_kpt"},
      {"--gamma-distill", "gamma_distill"},
      {"--gamma-p", "gamma_p"},
      {"--gamma-f", "gamma_f"},
      {"--lambda", "lambda"},
      {"--ensemble-size", "ensemble_size"},
      {"--uncertainty-scale", "uncertainty_scale"},
      {"--epsilon", "sinkhorn_epsilon"},
      {"--epsilon-relative", "sinkhorn_epsilon_relative"},
      {"--tau", "sinkhorn_tau"},
      {"--max-iters", "sinkhorn_max_iters"},
      {"--tol", "sinkhorn_tol"},
      {"--conditions", "conditions"},
      {"--corrupt-teacher", "corrupt_teacher"},
  };
  std::vector<std::string> flagValues(flagKeys.size());
  std::vector<CLI::Option*> flagOpts;
  for (std::size_t k = 0; k < flagKeys.size(); ++k) {
    flagOpts.push_back(exp->add_option(flagKeys[k].first, flagValues[k], "Sets config key " + flagKeys[k].second));
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sink) {
      if (*epsOpt) sinkCfg.epsilon = epsilon;
      double tau = 0.0;
      if (!parse_number(tauText, tau)) fail(ErrorCode::InvalidArgument, "--tau must be a number or inf");
      sinkCfg.tau = tau;
      sinkCfg.epsilonScaling = !noScaling;
      sinkCfg.validate();
      return cmd_sinkhorn(costPath, alphaSPath, alphaTPath, sinkCfg, squared, out);
    }
    if (*pnp) return cmd_pnp(corrPath, camPath, pnpIters, pnpTol, out);
    if (*mk) return cmd_make_pnp_case(mkSeed, mkCount, mkNoise, mkOut, mkCam);
    if (*ens) return cmd_ensemble(ensPath, ensScale, ensLambda, out);
    if (*rf) {
      out << receptive_field_extent(parse_layers(layersText)) << "\n";
      return kOk;
    }
    if (*reg) return cmd_region(mapPath, kx, ky, extent, out);
    if (*exp) {
      std::vector<std::pair<std::string, std::string>> flags;
      for (std::size_t k = 0; k < flagKeys.size(); ++k) {
        if (*flagOpts[k]) flags.emplace_back(flagKeys[k].second, flagValues[k]);
      }
      std::optional<std::uint64_t> seed;
      if (*seedOpt) seed = expSeed;
      return cmd_experiment(configPath, sets, flags, seed, jobs, outDir, out);
    }
  } catch (const Error& e) {
    err << "otkd: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "otkd: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace otkd::cli
