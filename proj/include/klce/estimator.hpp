#pragma once

// Squared kernel local calibration error: the unbiased U-statistic estimator,
// its plain-calibration reduction, and the analytic acceptance threshold.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "klce/dataset.hpp"
#include "klce/kernels.hpp"

namespace klce {

struct KlceEstimate {
  double value = 0.0;  // signed; a U-statistic may legitimately be negative
  Eigen::Index n = 0;
  KernelSpec k_spec;
  KernelSpec l_spec;
};

// value = (1 / (n(n-1))) * sum_{i != j} e_i K_ij L_ij e_j  with e = y - fhat.
// Computed as the full quadratic form minus the diagonal part.
inline KlceEstimate klce2_unbiased(const AuditDataset& d, const GramPair& g,
                                   const KernelSpec& k_spec = {}, const KernelSpec& l_spec = {}) {
  const Eigen::Index n = d.size();
  if (n < 2) throw std::invalid_argument("klce2_unbiased requires n >= 2");
  if (g.K.rows() != n || g.L.rows() != n)
    throw std::invalid_argument("Gram pair does not match dataset size");
  const Eigen::VectorXd e = d.residuals();
  const Eigen::MatrixXd M = g.K.cwiseProduct(g.L);
  const double full = e.dot(M * e);
  const double diag = (M.diagonal().array() * e.array().square()).sum();
  const double denom = static_cast<double>(n) * static_cast<double>(n - 1);
  return KlceEstimate{(full - diag) / denom, n, k_spec, l_spec};
}

// Plain calibration error: the feature-space kernel collapsed to a constant,
// so only the score kernel remains.
inline KlceEstimate kce2(const AuditDataset& d, const KernelSpec& k_spec) {
  const GramPair g = gram_pair(d, k_spec, KernelSpec::constant());
  return klce2_unbiased(d, g, k_spec, KernelSpec::constant());
}

struct ThresholdConfig {
  double alpha_p = 0.05;  // significance level, in (0, 1)
  double bound_b = 1.0;   // per-term Hoeffding bound; 1 suffices for unit-bounded
                          // kernels with binary labels, override for others

  void check() const {
    if (!(alpha_p > 0.0 && alpha_p < 1.0))
      throw std::invalid_argument("alpha_p must lie in (0, 1)");
    if (!(bound_b > 0.0)) throw std::invalid_argument("bound_b must be positive");
  }
};

// The null "KLCE^2 = 0" is retained at level alpha_p iff the estimate falls
// below B / sqrt(n) * sqrt(ln(1 / alpha_p^2)).
inline double acceptance_threshold(const ThresholdConfig& cfg, Eigen::Index n) {
  // alpha_p = 1 is admitted as the degenerate boundary (threshold 0).
  if (!(cfg.alpha_p > 0.0 && cfg.alpha_p <= 1.0))
    throw std::invalid_argument("alpha_p must lie in (0, 1]");
  if (!(cfg.bound_b > 0.0)) throw std::invalid_argument("bound_b must be positive");
  if (n < 1) throw std::invalid_argument("acceptance_threshold requires n >= 1");
  return cfg.bound_b / std::sqrt(static_cast<double>(n)) *
         std::sqrt(std::log(1.0 / (cfg.alpha_p * cfg.alpha_p)));
}

// Two-sided deviation bound 2 exp(-eps^2 n / (2 B^2)), clamped to [0, 1].
inline double hoeffding_tail(const ThresholdConfig& cfg, Eigen::Index n, double eps) {
  cfg.check();
  if (!(eps > 0.0)) throw std::invalid_argument("hoeffding_tail requires eps > 0");
  const double raw =
      2.0 * std::exp(-eps * eps * static_cast<double>(n) / (2.0 * cfg.bound_b * cfg.bound_b));
  return std::min(raw, 1.0);
}

}  // namespace klce
