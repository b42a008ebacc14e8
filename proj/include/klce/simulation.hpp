#pragma once

// Synthetic generator and the Type-I / Type-II error experiments, plus the
// score-weighted inference estimator.
//
// Generator: x ~ N(0, I_d), y ~ Bernoulli(sigmoid(sum_i x_i)). The Bayes
// model scores with sigmoid over all d coordinates; the DropLast model omits
// the last coordinate and is therefore locally miscalibrated along x_d.

#include <Eigen/Dense>
#include <boost/math/distributions/binomial.hpp>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "klce/dataset.hpp"
#include "klce/parallel.hpp"
#include "klce/recalibration.hpp"
#include "klce/rng.hpp"
#include "klce/test.hpp"

namespace klce {

enum class SimModel { Bayes, DropLast };

struct SimConfig {
  int d = 2;
  int n = 500;
  int replicates = 1000;
  double alpha_p = 0.05;
  int n_bootstrap = 500;
  std::uint64_t seed = 0;
  SimModel model = SimModel::Bayes;
  KernelSpec k_spec = KernelSpec::rbf_median();
  KernelSpec l_spec = KernelSpec::rbf_median();
  double bandwidth_scale = 1.0;  // multiplies resolved bandwidths (width sweeps)
  int threads = 1;

  void check() const {
    if (d < 1) throw std::invalid_argument("d must be >= 1");
    if (model == SimModel::DropLast && d < 2)
      throw std::invalid_argument("DropLast model requires d >= 2");
    if (n < 2) throw std::invalid_argument("n must be >= 2");
    if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  }
};

struct SimCell {
  int d = 0;
  int n = 0;
  double rejection_rate = 0.0;
  double ci_lo = 0.0;  // exact binomial 95% CI
  double ci_hi = 0.0;
  int replicates = 0;
};

struct SimReport {
  std::vector<SimCell> cells;
};

// Clopper-Pearson interval for k successes out of n.
inline std::pair<double, double> exact_binomial_ci(int k, int n, double confidence = 0.95) {
  using boost::math::binomial_distribution;
  const double risk = (1.0 - confidence) / 2.0;
  const double lo = binomial_distribution<>::find_lower_bound_on_p(n, k, risk);
  const double hi = binomial_distribution<>::find_upper_bound_on_p(n, k, risk);
  return {lo, hi};
}

// Deterministic in (seed, replicate). Per record: d normals for x, then one
// uniform for the label.
inline AuditDataset gen_synthetic(const SimConfig& cfg, std::uint64_t replicate) {
  cfg.check();
  auto gen = rng::derive_stream(cfg.seed, replicate);
  Eigen::MatrixXd X(cfg.n, cfg.d);
  Eigen::VectorXd y(cfg.n), fhat(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    double partial_sum = 0.0;  // first d-1 coordinates
    for (int j = 0; j < cfg.d; ++j) {
      X(i, j) = rng::standard_normal(gen);
      if (j < cfg.d - 1) partial_sum += X(i, j);
    }
    const double p_bayes = sigmoid(partial_sum + X(i, cfg.d - 1));
    y[i] = rng::uniform01(gen) < p_bayes ? 1.0 : 0.0;
    fhat[i] = cfg.model == SimModel::Bayes ? p_bayes : sigmoid(partial_sum);
  }
  std::vector<std::string> names(static_cast<std::size_t>(cfg.d));
  for (int j = 0; j < cfg.d; ++j) names[static_cast<std::size_t>(j)] = "x" + std::to_string(j + 1);
  return AuditDataset(std::move(X), std::move(y), std::move(fhat), std::move(names));
}

namespace detail {

// Rejection rate of run_test over cfg.replicates independent data draws.
// Replicate r generates data from stream (seed, r) and bootstraps with a
// distinct derived seed, parallel over replicates.
inline SimCell rejection_cell(const SimConfig& cfg) {
  std::vector<char> rejected(static_cast<std::size_t>(cfg.replicates), 0);
  parallel_for(rejected.size(), cfg.threads, [&](std::size_t r) {
    const AuditDataset data = gen_synthetic(cfg, r);
    TestConfig tc;
    tc.n_bootstrap = cfg.n_bootstrap;
    tc.alpha_p = cfg.alpha_p;
    tc.seed = rng::splitmix64(cfg.seed ^ (r + 0x9d2c5680ULL));
    tc.k_spec = resolve_bandwidth(cfg.k_spec, data.scores());
    tc.l_spec = resolve_bandwidth(cfg.l_spec, data.features());
    if (cfg.bandwidth_scale != 1.0) {
      if (tc.k_spec.family == KernelFamily::Rbf) tc.k_spec.bandwidth *= cfg.bandwidth_scale;
      if (tc.l_spec.family == KernelFamily::Rbf) tc.l_spec.bandwidth *= cfg.bandwidth_scale;
    }
    tc.threads = 1;  // parallelism lives at the replicate level
    rejected[r] = run_test(data, tc).reject_at_alpha ? 1 : 0;
  });
  int k = 0;
  for (char c : rejected) k += c;
  SimCell cell;
  cell.d = cfg.d;
  cell.n = cfg.n;
  cell.replicates = cfg.replicates;
  cell.rejection_rate = static_cast<double>(k) / cfg.replicates;
  std::tie(cell.ci_lo, cell.ci_hi) = exact_binomial_ci(k, cfg.replicates);
  return cell;
}

}  // namespace detail

namespace detail {

inline SimReport grid_experiment(SimConfig cfg, SimModel model, std::vector<int> d_grid,
                                 std::vector<int> n_grid) {
  cfg.model = model;
  if (d_grid.empty()) d_grid = {cfg.d};
  if (n_grid.empty()) n_grid = {cfg.n};
  SimReport report;
  for (int d : d_grid) {
    for (int n : n_grid) {
      SimConfig c = cfg;
      c.d = d;
      c.n = n;
      c.check();
      report.cells.push_back(rejection_cell(c));
    }
  }
  return report;
}

}  // namespace detail

// Type-I error: rejection rate on Bayes-calibrated data, per (d, N) cell.
// Kernel-width sweeps are run by calling again with scaled bandwidths.
inline SimReport type1_experiment(const SimConfig& cfg, const std::vector<int>& d_grid = {},
                                  const std::vector<int>& n_grid = {}) {
  return detail::grid_experiment(cfg, SimModel::Bayes, d_grid, n_grid);
}

// Type-II error: per (d, N), fraction of replicates that FAIL to reject the
// DropLast model. Cells carry the rejection rate; Type-II error is its
// complement.
inline SimReport type2_experiment(const SimConfig& cfg, const std::vector<int>& d_grid,
                                  const std::vector<int>& n_grid) {
  return detail::grid_experiment(cfg, SimModel::DropLast, d_grid, n_grid);
}

// Plug-in estimator sum_i I(x_i) fhat_i / sum_i fhat_i of the score-weighted
// mean E[I(X) | Y = 1]; unbiased only under local calibration.
inline double inference_estimate(const AuditDataset& d, const std::vector<double>& I_values) {
  if (static_cast<Eigen::Index>(I_values.size()) != d.size())
    throw std::invalid_argument("inference_estimate: I_values length must equal dataset size");
  const double total = d.scores().sum();
  if (!(total > 0.0)) throw std::invalid_argument("inference_estimate: total score weight is zero");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    acc += I_values[static_cast<std::size_t>(i)] * d.scores()[i];
  return acc / total;
}

}  // namespace klce
