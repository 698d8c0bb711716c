#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"
#include "otkd/geometry.hpp"
#include "otkd/pfkd.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = otkd::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "otkd_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path.string();
}

std::vector<std::vector<double>> plan_rows(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

std::string tagged(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  }
  return "";
}

std::vector<std::string> lines_of(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("help and version on every command") {
  for (const std::string cmd : {"", "sinkhorn", "pnp", "make-pnp-case", "ensemble", "receptive-field", "region", "experiment"}) {
    CAPTURE(cmd);
    std::vector<std::string> help, version;
    if (!cmd.empty()) {
      help.push_back(cmd);
      version.push_back(cmd);
    }
    help.push_back("--help");
    version.push_back("--version");
    const Outcome h = run(help);
    CHECK(h.code == 0);
    CHECK(h.out.find("Usage") != std::string::npos);
    const Outcome v = run(version);
    CHECK(v.code == 0);
    CHECK(v.out.find(OTKD_VERSION) != std::string::npos);
  }
  CHECK(run({}).code == 1);
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({"sinkhorn", "--cost"}).code == 1);
}

TEST_CASE("sinkhorn command") {
  const fs::path dir = scratch("sinkhorn");
  const std::string one = write(dir / "one.csv", "1\n");
  const Outcome trivial = run({"sinkhorn", "--cost", write(dir / "c1.csv", "0\n"), "--alpha-s", one, "--alpha-t", one});
  CHECK(trivial.code == 0);
  CHECK(plan_rows(trivial.out) == std::vector<std::vector<double>>{{1.0}});
  CHECK(trivial.out.rfind("1.0\n", 0) == 0);
  CHECK(tagged(trivial.out, "# converged") == "true");

  // balanced 2x2 against the LP optimum
  otkd::MatrixRM cost(2, 2);
  cost << 0.2, 1.4, 1.1, 0.3;
  const double lp = oracle::lp_transport_optimum(cost, {0.4, 0.6}, {0.7, 0.3});
  const double vertex[2][2] = {{0.4, 0.0}, {0.3, 0.3}};   // the unique optimal vertex
  const Outcome two = run({"sinkhorn", "--cost", write(dir / "c2.csv", "# student rows\n0.2,1.4\n1.1,0.3\n"), "--alpha-s",
                           write(dir / "a.csv", "0.4,0.6\n"), "--alpha-t", write(dir / "b.csv", "0.7\n0.3\n"), "--tau",
                           "inf", "--epsilon-relative", "1e-3", "--max-iters", "1000000", "--tol", "1e-12"});
  CHECK(two.code == 0);
  const auto plan = plan_rows(two.out);
  REQUIRE(plan.size() == 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(plan[i][j] - vertex[i][j]) < 1e-4);
  CHECK(std::stod(tagged(two.out, "# transport_cost")) == doctest::Approx(lp).epsilon(1e-4));
  CHECK(std::stod(tagged(two.out, "# row_residual")) < 1e-6);

  const Outcome squared = run({"sinkhorn", "--cost", write(dir / "c3.csv", "2\n"), "--alpha-s", one, "--alpha-t", one,
                               "--tau", "inf", "--squared"});
  CHECK(std::stod(tagged(squared.out, "# transport_cost")) == doctest::Approx(4.0));

  const Outcome bad = run({"sinkhorn", "--cost", write(dir / "bad.csv", "1,2\n3,x\n"), "--alpha-s",
                           write(dir / "a2.csv", "1,1\n"), "--alpha-t", write(dir / "b2.csv", "1,1\n")});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("bad.csv:2") != std::string::npos);
  const Outcome ragged = run({"sinkhorn", "--cost", write(dir / "ragged.csv", "1,2\n\n3\n"), "--alpha-s",
                              (dir / "a2.csv").string(), "--alpha-t", (dir / "b2.csv").string()});
  CHECK(ragged.code == 1);
  CHECK(ragged.err.find("ragged.csv:3") != std::string::npos);
  const Outcome dims = run({"sinkhorn", "--cost", write(dir / "c4.csv", "1,2,3\n"), "--alpha-s", one, "--alpha-t",
                            (dir / "b2.csv").string()});
  CHECK(dims.code == 1);
  const Outcome tau = run({"sinkhorn", "--cost", one, "--alpha-s", one, "--alpha-t", one, "--tau", "abc"});
  CHECK(tau.code == 1);

  const Outcome capped = run({"sinkhorn", "--cost", (dir / "c2.csv").string(), "--alpha-s", (dir / "a.csv").string(),
                              "--alpha-t", (dir / "b.csv").string(), "--tau", "inf", "--epsilon", "1e-4", "--max-iters",
                              "3", "--no-epsilon-scaling"});
  CHECK(capped.code == 2);
  CHECK(tagged(capped.out, "# converged") == "false");
}

TEST_CASE("pnp command") {
  const fs::path dir = scratch("pnp");
  const std::string corr = (dir / "case.csv").string();
  const std::string cam = (dir / "cam.txt").string();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    REQUIRE(run({"make-pnp-case", "--seed", std::to_string(seed), "--count", "10", "--out", corr, "--camera-out", cam}).code == 0);
    const Outcome solved = run({"pnp", "--correspondences", corr, "--camera", cam});
    CHECK(solved.code == 0);
    CHECK(std::stod(tagged(solved.out, "rotation_error_deg")) < 1e-6);
    CHECK(std::stod(tagged(solved.out, "translation_error_m")) < 1e-9);
    CHECK(std::stod(tagged(solved.out, "rms_px")) < 1e-8);
    CHECK(tagged(solved.out, "rotation").size() > 0);
  }
  const std::string again = (dir / "again.csv").string();
  run({"make-pnp-case", "--seed", "3", "--count", "10", "--out", again, "--camera-out", cam});
  CHECK(lines_of(again) == lines_of(corr));

  run({"make-pnp-case", "--seed", "4", "--count", "5", "--out", corr, "--camera-out", cam});
  const Outcome few = run({"pnp", "--correspondences", corr, "--camera", cam});
  CHECK(few.code == 1);
  CHECK(few.err.find('5') != std::string::npos);

  std::string line;
  for (int i = 0; i < 8; ++i) line += std::to_string(10 + i) + "," + std::to_string(20 + 2 * i) + "," + std::to_string(0.1 * i) + ",0,0\n";
  const Outcome collinear = run({"pnp", "--correspondences", write(dir / "line.csv", line), "--camera", cam});
  CHECK(collinear.code == 2);

  const Outcome badCam = run({"pnp", "--correspondences", again, "--camera", write(dir / "badcam.txt", "fx = 80\nfy = 80\nskew = 1\n")});
  CHECK(badCam.code == 1);
  CHECK(badCam.err.find("badcam.txt:3") != std::string::npos);
  const Outcome badRow = run({"pnp", "--correspondences", write(dir / "badrow.csv", "u,v,X,Y,Z\n1,2,3,4\n"), "--camera", cam});
  CHECK(badRow.code == 1);
  CHECK(badRow.err.find("badrow.csv:2") != std::string::npos);
}

TEST_CASE("component commands") {
  const fs::path dir = scratch("components");
  const Outcome rf = run({"receptive-field", "--layers", "3/2,3/2,3"});
  CHECK(rf.code == 0);
  CHECK(rf.out == "15\n");
  CHECK(run({"receptive-field", "--layers", "3/x"}).code == 1);
  CHECK(run({"receptive-field", "--layers", "4"}).out == "4\n");
  CHECK(run({"receptive-field", "--layers", "0"}).code == 1);
  CHECK(run({"receptive-field", "--layers", "3/0"}).code == 1);

  const Outcome ens = run({"ensemble", "--predictions",
                           write(dir / "e.csv", "member_id,keypoint_id,x,y,present\n0,0,1,1,1\n1,0,3,1,1\n0,1,5,5,1\n1,1,0,0,0\n")});
  CHECK(ens.code == 0);
  std::istringstream rows(ens.out);
  std::string header, k0, k1;
  std::getline(rows, header);
  std::getline(rows, k0);
  std::getline(rows, k1);
  CHECK(header == "keypoint,x,y,contributors,u,alpha_t");
  CHECK(k0.rfind("0,2.0,1.0,2,", 0) == 0);
  CHECK(k1 == "1,5.0,5.0,1,1.0,0.5");

  otkd::Tensor3 data(2, 4, 4);
  for (std::size_t k = 0; k < 32; ++k) data.channel(k / 16)[k % 16] = static_cast<double>(k);
  const otkd::FeatureMap fmap(data, 0.5);
  {
    std::ofstream bin(dir / "map.bin", std::ios::binary);
    otkd::write_feature_map(bin, fmap);
  }
  const Outcome region = run({"region", "--feature-map", (dir / "map.bin").string(), "--x", "2", "--y", "4", "--extent", "3"});
  CHECK(region.code == 0);
  CHECK(region.out == "# center_row 2\n# center_col 1\n4.0,5.0,6.0\n8.0,9.0,10.0\n12.0,13.0,14.0\n\n"
                      "20.0,21.0,22.0\n24.0,25.0,26.0\n28.0,29.0,30.0\n");
  CHECK(run({"region", "--feature-map", write(dir / "junk.bin", "xx"), "--x", "0", "--y", "0"}).code == 1);
}

TEST_CASE("experiment command") {
  const fs::path dir = scratch("experiment");
  const std::string config = std::string(OTKD_CONFIG_DIR) + "/default.cfg";
  const Outcome full = run({"experiment", "--config", config, "--out", (dir / "default").string()});
  CHECK(full.code == 0);
  const auto rows = lines_of(dir / "default" / "report.csv");
  CHECK(rows.size() == 1 + 15);
  CHECK(fs::exists(dir / "default" / "summary.json"));
  const auto manifest = lines_of(dir / "default" / "manifest.json");
  CHECK(std::any_of(manifest.begin(), manifest.end(), [](const std::string& l) { return l.find("config_hash") != std::string::npos; }));

  const std::vector<std::string> small = {"--set", "teacher_epochs=3", "--set", "teacher_train_scenes=8", "--set",
                                          "held_out_scenes=4", "--set", "teacher_error_threshold_px=1e9", "--set",
                                          "student_train_scenes=4", "--set", "test_scenes=4", "--epochs", "2", "--seeds", "1"};
  auto with = [&](std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };
  // noKD finishes, the first distilled condition blows up
  const Outcome diverged = run(with({"experiment", "--out", (dir / "diverged").string(), "--conditions", "noKD,uniformOT",
                                     "--gamma-distill", "1e250"}, small));
  CHECK(diverged.code == 3);
  const auto partial = lines_of(dir / "diverged" / "report.csv");
  REQUIRE(partial.size() == 2);
  CHECK(partial[1].rfind("noKD,", 0) == 0);

  CHECK(run(with({"experiment", "--out", (dir / "bad").string(), "--set", "nope=1"}, small)).code == 1);
  CHECK(run(with({"experiment", "--out", (dir / "bad").string(), "--lambda", "3"}, small)).code == 1);
  CHECK(run(with({"experiment", "--out", (dir / "bad").string(), "--config", write(dir / "bad.cfg", "seeds = two\n")}, small)).code == 1);
  CHECK(run({"experiment", "--config", config}).code == 1);
}
