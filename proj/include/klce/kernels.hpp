#pragma once

// Kernels on the score axis (k) and the audit-feature space (l), Gram
// matrices, and the median-heuristic bandwidth rule. The tensor-product
// kernel used by the estimators is the elementwise product K o L.

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "klce/dataset.hpp"

namespace klce {

enum class KernelFamily { Rbf, Constant };

enum class BandwidthRule { Fixed, MedianHeuristic };

// RBF convention: k(u, v) = exp(-||u - v||^2 / (2 sigma^2)), sigma = bandwidth.
struct KernelSpec {
  KernelFamily family = KernelFamily::Rbf;
  double bandwidth = 1.0;  // ignored for Constant
  BandwidthRule rule = BandwidthRule::Fixed;

  static KernelSpec rbf(double sigma) { return {KernelFamily::Rbf, sigma, BandwidthRule::Fixed}; }
  static KernelSpec rbf_median() { return {KernelFamily::Rbf, 0.0, BandwidthRule::MedianHeuristic}; }
  static KernelSpec constant() { return {KernelFamily::Constant, 1.0, BandwidthRule::Fixed}; }

  void check_resolved() const {
    if (family == KernelFamily::Rbf && !(bandwidth > 0.0))
      throw std::invalid_argument("RBF kernel requires bandwidth > 0 (got " +
                                  std::to_string(bandwidth) + ")");
  }
};

inline double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& v) {
  if (u.size() != v.size())
    throw std::invalid_argument("kernel_eval: dimension mismatch (" + std::to_string(u.size()) +
                                " vs " + std::to_string(v.size()) + ")");
  if (spec.family == KernelFamily::Constant) return 1.0;
  spec.check_resolved();
  const double d2 = (u - v).squaredNorm();
  return std::exp(-d2 / (2.0 * spec.bandwidth * spec.bandwidth));
}

// Median of the n(n-1)/2 pairwise Euclidean distances; rows of `points` are
// the sample vectors.
inline double median_heuristic(const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows();
  if (n < 2) throw std::invalid_argument("median_heuristic needs at least 2 points");
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      dists.push_back((points.row(i) - points.row(j)).norm());
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  const double med = (m % 2 == 1) ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
  if (!(med > 0.0))
    throw std::invalid_argument("median_heuristic: all points identical, bandwidth degenerate");
  return med;
}

// Fills in a MedianHeuristic bandwidth from the observed sample.
inline KernelSpec resolve_bandwidth(KernelSpec spec, const Eigen::MatrixXd& points) {
  if (spec.family == KernelFamily::Rbf && spec.rule == BandwidthRule::MedianHeuristic) {
    spec.bandwidth = median_heuristic(points);
    spec.rule = BandwidthRule::Fixed;
  }
  spec.check_resolved();
  return spec;
}

struct GramPair {
  Eigen::MatrixXd K;  // K_ij = k(fhat_i, fhat_j)
  Eigen::MatrixXd L;  // L_ij = l(x_i, x_j)
};

namespace detail {

inline Eigen::MatrixXd gram(const Eigen::MatrixXd& points, const KernelSpec& spec) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd G(n, n);
  if (spec.family == KernelFamily::Constant) {
    G.setOnes();
    return G;
  }
  spec.check_resolved();
  const double inv = -1.0 / (2.0 * spec.bandwidth * spec.bandwidth);
  for (Eigen::Index i = 0; i < n; ++i) {
    G(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::exp(inv * (points.row(i) - points.row(j)).squaredNorm());
      G(i, j) = v;
      G(j, i) = v;  // symmetry exact by construction
    }
  }
  return G;
}

}  // namespace detail

// K from the scores (1-D points), L from the feature vectors. Specs must be
// resolved (use resolve_bandwidth for the MedianHeuristic rule).
inline GramPair gram_pair(const AuditDataset& d, const KernelSpec& k_spec,
                          const KernelSpec& l_spec) {
  return GramPair{detail::gram(d.scores(), k_spec), detail::gram(d.features(), l_spec)};
}

}  // namespace klce
