// klce: audit the local calibration of probabilistic binary classifiers.
//
// Subcommands: audit, diagnose, metrics, recalibrate, simulate. Every
// subcommand is deterministic given its flags and --seed; reports embed the
// resolved configuration. Exit codes: 0 = null retained (or plain success),
// 2 = local calibration rejected, 1 = usage or validation error.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "klce/klce.hpp"

using nlohmann::json;

namespace {

struct DatasetOpts {
  std::string input;
  std::string label_col = "y";
  std::string score_col = "p";
  std::string feature_cols;  // comma separated; empty = all remaining
  bool standardize = false;
};

struct KernelOpts {
  std::string k_family = "rbf";
  std::string k_bandwidth = "median";
  std::string l_family = "rbf";
  std::string l_bandwidth = "median";
};

void add_dataset_opts(CLI::App* cmd, DatasetOpts& o, const char* flag = "--input") {
  cmd->add_option(flag, o.input, "input CSV file")->required();
  cmd->add_option("--label-col", o.label_col, "label column name");
  cmd->add_option("--score-col", o.score_col, "score column name");
  cmd->add_option("--feature-cols", o.feature_cols,
                  "comma-separated feature columns (default: all remaining)");
  cmd->add_flag("--standardize", o.standardize, "standardize feature columns before kernels");
}

void add_kernel_opts(CLI::App* cmd, KernelOpts& o) {
  cmd->add_option("--k-family", o.k_family, "score kernel family: rbf|constant");
  cmd->add_option("--k-bandwidth", o.k_bandwidth, "score kernel bandwidth: 'median' or > 0");
  cmd->add_option("--l-family", o.l_family, "feature kernel family: rbf|constant");
  cmd->add_option("--l-bandwidth", o.l_bandwidth, "feature kernel bandwidth: 'median' or > 0");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(std::stoi(item));
  return out;
}

klce::KernelSpec parse_kernel(const std::string& family, const std::string& bandwidth) {
  if (family == "constant") return klce::KernelSpec::constant();
  if (family != "rbf") throw CLI::ValidationError("kernel family must be rbf or constant");
  if (bandwidth == "median") return klce::KernelSpec::rbf_median();
  const double bw = std::stod(bandwidth);
  if (!(bw > 0.0)) throw CLI::ValidationError("bandwidth must be positive or 'median'");
  return klce::KernelSpec::rbf(bw);
}

klce::AuditDataset load(const DatasetOpts& o) {
  std::ifstream in(o.input);
  if (!in) throw std::runtime_error("cannot open input file '" + o.input + "'");
  klce::CsvSchema schema;
  schema.label_column = o.label_col;
  schema.score_column = o.score_col;
  schema.feature_columns = split_list(o.feature_cols);
  klce::AuditDataset d = klce::load_dataset(in, schema);
  return o.standardize ? klce::standardize_features(d) : d;
}

void write_output(const std::string& path, const std::string& content) {
  if (path == "-" || path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  out << content;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

json kernel_json(const klce::KernelSpec& s) {
  return {{"family", s.family == klce::KernelFamily::Rbf ? "rbf" : "constant"},
          {"bandwidth", s.bandwidth}};
}

json audit_report(const klce::AuditDataset& d, const klce::TestResult& res,
                  const KernelOpts& kopts) {
  json report;
  report["n"] = res.n;
  report["klce2"] = res.klce2_data;
  report["kce2"] = klce::kce2(d, res.config.k_spec).value;
  report["p_value"] = res.p_value;
  report["n_bootstrap"] = res.config.n_bootstrap;
  report["seed"] = res.config.seed;
  report["threshold_corollary2"] = res.analytic_threshold;
  report["reject"] = res.reject_at_alpha;
  report["warnings"] = res.warnings;
  report["null_quantiles"] = {{"0.5", quantile(res.null_samples, 0.5)},
                              {"0.9", quantile(res.null_samples, 0.9)},
                              {"0.95", quantile(res.null_samples, 0.95)},
                              {"0.99", quantile(res.null_samples, 0.99)}};
  report["metrics"] = {{"brier", klce::brier(d)},
                       {"ece", klce::ece(d)},
                       {"mce", klce::mce(d)},
                       {"accuracy", klce::accuracy(d)},
                       {"n_bins", 10}};
  report["config"] = {{"alpha", res.config.alpha_p},
                      {"bound_b", res.config.bound_b},
                      {"kernel", {{"k", kernel_json(res.config.k_spec)},
                                  {"l", kernel_json(res.config.l_spec)}}},
                      {"k_bandwidth_rule", kopts.k_bandwidth},
                      {"l_bandwidth_rule", kopts.l_bandwidth}};
  return report;
}

int cmd_audit(const DatasetOpts& dopts, const KernelOpts& kopts, klce::TestConfig tc,
              const std::string& output) {
  const klce::AuditDataset d = load(dopts);
  tc.k_spec = parse_kernel(kopts.k_family, kopts.k_bandwidth);
  tc.l_spec = parse_kernel(kopts.l_family, kopts.l_bandwidth);
  const klce::TestResult res = klce::run_test(d, tc);
  json report = audit_report(d, res, kopts);
  report["command"] = "audit";
  report["input"] = dopts.input;
  write_output(output, report.dump(2) + "\n");
  return res.reject_at_alpha ? 2 : 0;
}

int cmd_diagnose(const DatasetOpts& dopts, const KernelOpts& kopts, const std::string& queries_path,
                 const std::string& output, const std::string& trend_output,
                 const std::string& group_by, const std::string& axis, int degree) {
  const klce::AuditDataset d = load(dopts);
  klce::KernelSpec k_spec =
      klce::resolve_bandwidth(parse_kernel(kopts.k_family, kopts.k_bandwidth), d.scores());
  klce::KernelSpec l_spec =
      klce::resolve_bandwidth(parse_kernel(kopts.l_family, kopts.l_bandwidth), d.features());

  klce::LcbProfile profile;
  const klce::AuditDataset* query_set = &d;
  std::optional<klce::AuditDataset> queries;
  if (!queries_path.empty()) {
    DatasetOpts qopts = dopts;
    qopts.input = queries_path;
    queries = load(qopts);
    query_set = &*queries;
    std::vector<std::pair<Eigen::VectorXd, double>> qs;
    for (Eigen::Index i = 0; i < queries->size(); ++i)
      qs.emplace_back(queries->features().row(i).transpose(), queries->scores()[i]);
    profile = klce::lcb_profile(d, k_spec, l_spec, qs);
  } else {
    profile = klce::lcb_profile(d, k_spec, l_spec);
  }

  std::ostringstream csv;
  for (const auto& name : query_set->feature_names()) csv << name << ',';
  csv << "fhat,bias,debiased_fhat,effective_weight\n";
  for (const auto& est : profile.estimates) {
    for (Eigen::Index j = 0; j < est.query_x.size(); ++j)
      csv << klce::format_double(est.query_x[j]) << ',';
    csv << klce::format_double(est.query_fhat) << ',' << klce::format_double(est.bias) << ','
        << klce::format_double(est.debiased_fhat) << ','
        << klce::format_double(est.effective_weight) << '\n';
  }
  write_output(output, csv.str());
  for (const auto& w : profile.warnings) std::cerr << "warning: " << w << "\n";

  if (!trend_output.empty()) {
    const auto& names = query_set->feature_names();
    auto feature_index = [&](const std::string& name) -> int {
      if (name.empty()) return -1;
      for (std::size_t j = 0; j < names.size(); ++j)
        if (names[j] == name) return static_cast<int>(j);
      throw std::runtime_error("unknown feature '" + name + "'");
    };
    const int axis_idx = feature_index(axis.empty() ? names.front() : axis);
    const klce::GroupTrend trend =
        klce::group_trend(profile.estimates, feature_index(group_by), axis_idx, degree);
    json j;
    j["axis"] = axis.empty() ? names.front() : axis;
    j["group_by"] = group_by;
    j["degree"] = degree;
    json groups = json::object();
    for (const auto& [key, coefs] : trend.coefficients)
      groups[klce::format_double(key)] = coefs;
    j["coefficients"] = groups;
    j["warnings"] = trend.warnings;
    write_output(trend_output, j.dump(2) + "\n");
  }
  return 0;
}

int cmd_metrics(const DatasetOpts& dopts, int n_bins, const std::string& output,
                const std::string& reliability_output) {
  const klce::AuditDataset d = load(dopts);
  json j = {{"brier", klce::brier(d)},
            {"ece", klce::ece(d, n_bins)},
            {"mce", klce::mce(d, n_bins)},
            {"accuracy", klce::accuracy(d)},
            {"n_bins", n_bins}};
  write_output(output, j.dump(2) + "\n");
  if (!reliability_output.empty()) {
    const auto bins = klce::reliability(d, n_bins);
    std::ostringstream csv;
    csv << "lower,upper,count,mean_score,empirical_freq\n";
    for (const auto& b : bins.bins)
      csv << klce::format_double(b.lower) << ',' << klce::format_double(b.upper) << ',' << b.count
          << ',' << klce::format_double(b.mean_score) << ','
          << klce::format_double(b.empirical_freq) << '\n';
    write_output(reliability_output, csv.str());
  }
  return 0;
}

int cmd_recalibrate(const DatasetOpts& calib_opts, const std::string& test_path,
                    const std::string& method, const std::string& output,
                    const std::string& model_output, bool then_audit,
                    const std::string& report_output, const KernelOpts& kopts,
                    const klce::TestConfig& tc) {
  const klce::AuditDataset calib = load(calib_opts);
  DatasetOpts test_opts = calib_opts;
  test_opts.input = test_path;
  const klce::AuditDataset test = load(test_opts);

  klce::Recalibrator rec;
  if (method == "platt")
    rec = klce::fit_platt(calib);
  else if (method == "temperature")
    rec = klce::fit_temperature(calib);
  else if (method == "isotonic")
    rec = klce::fit_isotonic(calib);
  else
    throw CLI::ValidationError("--method must be platt, temperature, or isotonic");

  const klce::AuditDataset post = rec.apply(test);
  std::ostringstream csv;
  klce::CsvSchema schema;
  schema.label_column = calib_opts.label_col;
  schema.score_column = calib_opts.score_col;
  klce::write_dataset(csv, post, schema);
  write_output(output, csv.str());
  if (!model_output.empty()) write_output(model_output, rec.to_json().dump(2) + "\n");

  if (then_audit) {
    klce::TestConfig cfg = tc;
    cfg.k_spec = parse_kernel(kopts.k_family, kopts.k_bandwidth);
    cfg.l_spec = parse_kernel(kopts.l_family, kopts.l_bandwidth);
    const klce::TestResult pre_res = klce::run_test(test, cfg);
    const klce::TestResult post_res = klce::run_test(post, cfg);
    json report;
    report["command"] = "recalibrate";
    report["method"] = method;
    report["pre"] = audit_report(test, pre_res, kopts);
    report["post"] = audit_report(post, post_res, kopts);
    write_output(report_output, report.dump(2) + "\n");
    return post_res.reject_at_alpha ? 2 : 0;
  }
  return 0;
}

int cmd_simulate(const std::string& mode, const std::string& d_grid, const std::string& n_grid,
                 klce::SimConfig cfg, const KernelOpts& kopts, const std::string& output) {
  cfg.k_spec = parse_kernel(kopts.k_family, kopts.k_bandwidth);
  cfg.l_spec = parse_kernel(kopts.l_family, kopts.l_bandwidth);
  klce::SimReport report;
  if (mode == "type1")
    report = klce::type1_experiment(cfg, split_ints(d_grid), split_ints(n_grid));
  else if (mode == "type2")
    report = klce::type2_experiment(cfg, split_ints(d_grid), split_ints(n_grid));
  else
    throw CLI::ValidationError("--mode must be type1 or type2");
  std::ostringstream csv;
  csv << "d,N,rejection_rate,ci_lo,ci_hi\n";
  for (const auto& c : report.cells)
    csv << c.d << ',' << c.n << ',' << klce::format_double(c.rejection_rate) << ','
        << klce::format_double(c.ci_lo) << ',' << klce::format_double(c.ci_hi) << '\n';
  write_output(output, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local calibration auditing for probabilistic binary classifiers"};
  app.require_subcommand(1);

  DatasetOpts dopts;
  KernelOpts kopts;
  klce::TestConfig tc;
  std::string output = "-";

  auto* audit = app.add_subcommand("audit", "hypothesis-test local calibration of a score file");
  add_dataset_opts(audit, dopts);
  add_kernel_opts(audit, kopts);
  audit->add_option("--bootstrap", tc.n_bootstrap, "number of bootstrap replicates");
  audit->add_option("--alpha", tc.alpha_p, "significance level");
  audit->add_option("--seed", tc.seed, "RNG seed");
  audit->add_option("--bound-b", tc.bound_b, "Hoeffding bound constant B");
  audit->add_option("--threads", tc.threads, "worker thread cap");
  audit->add_option("--output", output, "report path, '-' = stdout");

  std::string queries_path, trend_output, group_by, axis;
  int degree = 3;
  auto* diagnose = app.add_subcommand("diagnose", "per-record local calibration bias");
  add_dataset_opts(diagnose, dopts);
  add_kernel_opts(diagnose, kopts);
  diagnose->add_option("--queries", queries_path, "optional query CSV (defaults to input records)");
  diagnose->add_option("--output", output, "bias CSV path, '-' = stdout");
  diagnose->add_option("--trend-output", trend_output, "per-group polynomial trend JSON path");
  diagnose->add_option("--group-by", group_by, "feature name to group trends by");
  diagnose->add_option("--axis", axis, "feature name the trend is fit against");
  diagnose->add_option("--degree", degree, "polynomial degree for trends");

  int n_bins = 10;
  std::string reliability_output;
  auto* metrics = app.add_subcommand("metrics", "Brier/ECE/MCE/accuracy baselines");
  add_dataset_opts(metrics, dopts);
  metrics->add_option("--bins", n_bins, "number of equal-width bins");
  metrics->add_option("--output", output, "metrics JSON path, '-' = stdout");
  metrics->add_option("--reliability-output", reliability_output, "reliability-diagram CSV path");

  std::string test_path, method = "platt", model_output, report_output = "-";
  bool then_audit = false;
  auto* recal = app.add_subcommand("recalibrate", "fit a recalibrator and apply it");
  add_dataset_opts(recal, dopts, "--calib");
  add_kernel_opts(recal, kopts);
  recal->add_option("--test", test_path, "CSV the fitted recalibrator is applied to")->required();
  recal->add_option("--method", method, "platt|temperature|isotonic");
  recal->add_option("--output", output, "recalibrated CSV path, '-' = stdout");
  recal->add_option("--model-output", model_output, "fitted recalibrator JSON path");
  recal->add_flag("--then-audit", then_audit, "audit pre- and post-recalibration scores");
  recal->add_option("--report-output", report_output, "pre/post audit report path");
  recal->add_option("--bootstrap", tc.n_bootstrap, "bootstrap replicates for --then-audit");
  recal->add_option("--alpha", tc.alpha_p, "significance level for --then-audit");
  recal->add_option("--seed", tc.seed, "RNG seed for --then-audit");
  recal->add_option("--threads", tc.threads, "worker thread cap");

  std::string mode = "type1", d_grid, n_grid;
  klce::SimConfig sim;
  auto* simulate = app.add_subcommand("simulate", "Type-I / Type-II error studies");
  add_kernel_opts(simulate, kopts);
  simulate->add_option("--mode", mode, "type1|type2");
  simulate->add_option("--d-grid", d_grid, "comma-separated feature dimensions");
  simulate->add_option("--n-grid", n_grid, "comma-separated sample sizes");
  simulate->add_option("--replicates", sim.replicates, "replicates per cell");
  simulate->add_option("--alpha", sim.alpha_p, "significance level");
  simulate->add_option("--bootstrap", sim.n_bootstrap, "bootstrap replicates per test");
  simulate->add_option("--seed", sim.seed, "RNG seed");
  simulate->add_option("--bandwidth-scale", sim.bandwidth_scale,
                       "multiplier on resolved bandwidths (width sweeps)");
  simulate->add_option("--threads", sim.threads, "worker thread cap");
  simulate->add_option("--output", output, "result CSV path, '-' = stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (audit->parsed()) return cmd_audit(dopts, kopts, tc, output);
    if (diagnose->parsed())
      return cmd_diagnose(dopts, kopts, queries_path, output, trend_output, group_by, axis, degree);
    if (metrics->parsed()) return cmd_metrics(dopts, n_bins, output, reliability_output);
    if (recal->parsed())
      return cmd_recalibrate(dopts, test_path, method, output, model_output, then_audit,
                             report_output, kopts, tc);
    if (simulate->parsed()) return cmd_simulate(mode, d_grid, n_grid, sim, kopts, output);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
