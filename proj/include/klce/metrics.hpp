#pragma once

// Conventional calibration baselines: Brier score, ECE, MCE, accuracy, and
// reliability-diagram bins. Equal-width bins on [0, 1]; a score of exactly 1
// falls in the top bin.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "klce/dataset.hpp"

namespace klce {

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;  // [lower, upper), upper closed for the last bin
  Eigen::Index count = 0;
  double mean_score = 0.0;      // 0 when empty
  double empirical_freq = 0.0;  // fraction of y = 1, 0 when empty
};

struct ReliabilityBins {
  std::vector<ReliabilityBin> bins;
};

inline double brier(const AuditDataset& d) {
  return (d.scores() - d.labels()).squaredNorm() / static_cast<double>(d.size());
}

inline double accuracy(const AuditDataset& d, double threshold = 0.5) {
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if ((d.scores()[i] >= threshold ? 1.0 : 0.0) == d.labels()[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(d.size());
}

inline ReliabilityBins reliability(const AuditDataset& d, int n_bins = 10) {
  if (n_bins < 1) throw std::invalid_argument("n_bins must be >= 1");
  ReliabilityBins out;
  out.bins.resize(static_cast<std::size_t>(n_bins));
  std::vector<double> score_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> label_sum(static_cast<std::size_t>(n_bins), 0.0);
  for (int b = 0; b < n_bins; ++b) {
    out.bins[static_cast<std::size_t>(b)].lower = static_cast<double>(b) / n_bins;
    out.bins[static_cast<std::size_t>(b)].upper = static_cast<double>(b + 1) / n_bins;
  }
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    int b = static_cast<int>(std::floor(d.scores()[i] * n_bins));
    if (b >= n_bins) b = n_bins - 1;  // score exactly 1
    auto& bin = out.bins[static_cast<std::size_t>(b)];
    ++bin.count;
    score_sum[static_cast<std::size_t>(b)] += d.scores()[i];
    label_sum[static_cast<std::size_t>(b)] += d.labels()[i];
  }
  for (int b = 0; b < n_bins; ++b) {
    auto& bin = out.bins[static_cast<std::size_t>(b)];
    if (bin.count > 0) {
      bin.mean_score = score_sum[static_cast<std::size_t>(b)] / static_cast<double>(bin.count);
      bin.empirical_freq = label_sum[static_cast<std::size_t>(b)] / static_cast<double>(bin.count);
    }
  }
  return out;
}

inline double ece(const AuditDataset& d, int n_bins = 10) {
  const auto r = reliability(d, n_bins);
  double acc = 0.0;
  for (const auto& bin : r.bins)
    if (bin.count > 0)
      acc += static_cast<double>(bin.count) / static_cast<double>(d.size()) *
             std::abs(bin.mean_score - bin.empirical_freq);
  return acc;
}

// Max gap over nonempty bins; empty bins have no defined frequency.
inline double mce(const AuditDataset& d, int n_bins = 10) {
  const auto r = reliability(d, n_bins);
  double worst = 0.0;
  for (const auto& bin : r.bins)
    if (bin.count > 0) worst = std::max(worst, std::abs(bin.mean_score - bin.empirical_freq));
  return worst;
}

}  // namespace klce
