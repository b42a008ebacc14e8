#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "klce/klce.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "klce_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

RunResult run_cli(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = std::string(KLCE_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                          err.string();
  const int status = std::system(cmd.c_str());
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  return RunResult{WEXITSTATUS(status), slurp(out), slurp(err)};
}

std::string write_csv(const std::string& name, const klce::AuditDataset& d) {
  const fs::path p = work_dir() / name;
  std::ofstream out(p);
  klce::write_dataset(out, d);
  return p.string();
}

}  // namespace

TEST_CASE("audit of a zero-residual file retains the null with klce2 = 0") {
  const std::string path = write_csv("zero.csv", test_util::zero_residual_dataset(20));
  const RunResult r =
      run_cli("audit --input " + path + " --k-bandwidth 0.5 --l-bandwidth 1 --bootstrap 50 --seed 1");
  CHECK(r.exit_code == 0);
  const json report = json::parse(r.out);
  CHECK(report["klce2"] == 0.0);
  CHECK(report["reject"] == false);
  CHECK(report["warnings"].size() == 1);
  CHECK(report["command"] == "audit");
}

TEST_CASE("audit report carries the contract keys") {
  const std::string path = write_csv("rand.csv", test_util::random_dataset(42, 80, 2));
  const RunResult r = run_cli("audit --input " + path + " --bootstrap 100 --seed 7");
  CHECK((r.exit_code == 0 || r.exit_code == 2));
  const json report = json::parse(r.out);
  for (const char* key : {"klce2", "kce2", "p_value", "n_bootstrap", "seed",
                          "threshold_corollary2", "reject", "warnings", "null_quantiles",
                          "metrics", "config", "n"})
    CHECK(report.contains(key));
  for (const char* q : {"0.5", "0.9", "0.95", "0.99"})
    CHECK(report["null_quantiles"].contains(q));
  CHECK(report["metrics"].contains("brier"));
  CHECK((report["reject"].get<bool>() ? 2 : 0) == r.exit_code);
}

TEST_CASE("a DropLast export is rejected with exit code 2") {
  klce::SimConfig cfg;
  cfg.d = 2;
  cfg.n = 1000;
  cfg.seed = 21;
  cfg.model = klce::SimModel::DropLast;
  const std::string path = write_csv("droplast.csv", klce::gen_synthetic(cfg, 0));
  const RunResult r = run_cli("audit --input " + path + " --bootstrap 500 --seed 2");
  CHECK(r.exit_code == 2);
  CHECK(json::parse(r.out)["reject"] == true);
}

TEST_CASE("a missing column maps to exit 1 and names the column") {
  const fs::path p = work_dir() / "badcols.csv";
  std::ofstream(p) << "label,p,age\n1,0.5,30\n0,0.5,40\n";
  const RunResult r = run_cli("audit --input " + p.string());
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("'y'") != std::string::npos);
}

TEST_CASE("audit output is byte-identical across runs and thread counts") {
  const std::string path = write_csv("det.csv", test_util::random_dataset(9, 120, 2));
  const std::string base = "audit --input " + path + " --bootstrap 200 --seed 33";
  const RunResult a = run_cli(base + " --threads 1");
  const RunResult b = run_cli(base + " --threads 1");
  const RunResult c = run_cli(base + " --threads 4");
  CHECK(a.out == b.out);
  CHECK(a.out == c.out);
}

TEST_CASE("diagnose emits the bias CSV contract") {
  const std::string path = write_csv("diag.csv", test_util::zero_residual_dataset(10));
  const RunResult r = run_cli("diagnose --input " + path + " --k-bandwidth 0.5 --l-bandwidth 1");
  CHECK(r.exit_code == 0);
  std::istringstream lines(r.out);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "x,fhat,bias,debiased_fhat,effective_weight");
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(line.find(",0,") != std::string::npos);  // zero bias column
  }
  CHECK(rows == 10);
}

TEST_CASE("diagnose matches the library profile") {
  const klce::AuditDataset d = test_util::random_dataset(71, 25, 1);
  const std::string path = write_csv("diag2.csv", d);
  const RunResult r = run_cli("diagnose --input " + path + " --k-bandwidth 0.4 --l-bandwidth 0.9");
  REQUIRE(r.exit_code == 0);
  const klce::LcbProfile prof =
      klce::lcb_profile(d, klce::KernelSpec::rbf(0.4), klce::KernelSpec::rbf(0.9));
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);  // header
  for (const auto& est : prof.estimates) {
    REQUIRE(std::getline(lines, line));
    CHECK(line.find(klce::format_double(est.bias)) != std::string::npos);
  }
}

TEST_CASE("diagnose writes group trends") {
  const std::string path = write_csv("diag3.csv", test_util::random_dataset(72, 40, 2));
  const fs::path trend = work_dir() / "trend.json";
  const RunResult r = run_cli("diagnose --input " + path +
                              " --k-bandwidth 0.4 --l-bandwidth 0.9 --axis f0 --degree 2"
                              " --trend-output " + trend.string());
  REQUIRE(r.exit_code == 0);
  std::ifstream in(trend);
  const json j = json::parse(in);
  CHECK(j["degree"] == 2);
  CHECK(j["coefficients"].size() == 1);
  CHECK(j["coefficients"].begin()->size() == 3);
}

TEST_CASE("metrics prints the fixed JSON key set") {
  const std::string path = write_csv("met.csv", test_util::random_dataset(43, 60, 1));
  const RunResult r = run_cli("metrics --input " + path + " --bins 5");
  CHECK(r.exit_code == 0);
  const json j = json::parse(r.out);
  CHECK(j.size() == 5);
  for (const char* key : {"brier", "ece", "mce", "accuracy", "n_bins"}) CHECK(j.contains(key));
  CHECK(j["n_bins"] == 5);
}

TEST_CASE("metrics reliability CSV has the documented schema") {
  const std::string path = write_csv("met2.csv", test_util::random_dataset(44, 60, 1));
  const fs::path rel = work_dir() / "rel.csv";
  const RunResult r =
      run_cli("metrics --input " + path + " --reliability-output " + rel.string());
  CHECK(r.exit_code == 0);
  std::ifstream in(rel);
  std::string header;
  std::getline(in, header);
  CHECK(header == "lower,upper,count,mean_score,empirical_freq");
}

TEST_CASE("recalibrate round-trips columns and writes the model JSON") {
  const std::string calib = write_csv("calib.csv", test_util::random_dataset(45, 300, 1));
  const klce::AuditDataset test_data = test_util::random_dataset(46, 100, 1);
  const std::string test_path = write_csv("test.csv", test_data);
  const fs::path model = work_dir() / "model.json";
  const RunResult r = run_cli("recalibrate --calib " + calib + " --test " + test_path +
                              " --method isotonic --model-output " + model.string());
  REQUIRE(r.exit_code == 0);
  std::istringstream out(r.out);
  const klce::AuditDataset post = klce::load_dataset(out);
  CHECK(post.size() == test_data.size());
  CHECK(post.labels() == test_data.labels());
  CHECK(post.features() == test_data.features());

  std::ifstream min(model);
  const klce::Recalibrator rec = klce::Recalibrator::from_json(json::parse(min));
  for (Eigen::Index i = 0; i < post.size(); ++i)
    CHECK(post.scores()[i] == rec.apply_score(test_data.scores()[i]));
}

TEST_CASE("recalibrate --then-audit reports pre and post p-values") {
  const std::string calib = write_csv("calib2.csv", test_util::random_dataset(47, 200, 1));
  const std::string test_path = write_csv("test2.csv", test_util::random_dataset(48, 150, 1));
  const fs::path report = work_dir() / "report.json";
  const fs::path scored = work_dir() / "scored.csv";
  const RunResult r = run_cli("recalibrate --calib " + calib + " --test " + test_path +
                              " --method temperature --then-audit --bootstrap 100 --seed 3" +
                              " --output " + scored.string() + " --report-output " +
                              report.string());
  CHECK((r.exit_code == 0 || r.exit_code == 2));
  std::ifstream in(report);
  const json j = json::parse(in);
  CHECK(j["pre"].contains("p_value"));
  CHECK(j["post"].contains("p_value"));
  CHECK(j["method"] == "temperature");
}

TEST_CASE("simulate emits the plot-ready CSV schema") {
  const RunResult r = run_cli(
      "simulate --mode type2 --d-grid 2 --n-grid 40,60 --replicates 4 --bootstrap 20 --seed 5");
  REQUIRE(r.exit_code == 0);
  std::istringstream lines(r.out);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "d,N,rejection_rate,ci_lo,ci_hi");
  int rows = 0;
  std::string line;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("simulate is deterministic across thread counts") {
  const std::string base =
      "simulate --mode type1 --d-grid 2 --n-grid 50 --replicates 6 --bootstrap 30 --seed 8";
  const RunResult a = run_cli(base + " --threads 1");
  const RunResult b = run_cli(base + " --threads 4");
  CHECK(a.out == b.out);
}
