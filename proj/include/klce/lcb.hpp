#pragma once

// Per-point local calibration bias: the normalized error-witness estimate at
// a query (x', fhat'), profiles over many queries, and per-group polynomial
// trends for plotting bias against a feature axis.

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "klce/dataset.hpp"
#include "klce/kernels.hpp"

namespace klce {

struct NoSupportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LcbEstimate {
  Eigen::VectorXd query_x;
  double query_fhat = 0.0;
  double bias = 0.0;              // weighted mean of residuals, in [-1, 1]
  double debiased_fhat = 0.0;     // clamp(query_fhat + bias, 0, 1)
  double effective_weight = 0.0;  // denominator sum of kernel weights
};

// bias = sum_i e_i k(fhat_i, fhat') l(x_i, x') / sum_i k(fhat_i, fhat') l(x_i, x').
// The sum runs over all records including any identical to the query; the
// diagnostic is a smoother, not a U-statistic.
inline LcbEstimate lcb_at(const AuditDataset& d, const KernelSpec& k_spec,
                          const KernelSpec& l_spec, const Eigen::VectorXd& query_x,
                          double query_fhat) {
  const Eigen::Index n = d.size();
  Eigen::VectorXd qf(1);
  qf[0] = query_fhat;
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd fi(1);
    fi[0] = d.scores()[i];
    const double w = kernel_eval(k_spec, fi, qf) *
                     kernel_eval(l_spec, d.features().row(i).transpose(), query_x);
    num += (d.labels()[i] - d.scores()[i]) * w;
    den += w;
  }
  if (!(den > 0.0))
    throw NoSupportError("lcb_at: query has zero kernel weight over the dataset");
  LcbEstimate est;
  est.query_x = query_x;
  est.query_fhat = query_fhat;
  est.bias = num / den;
  est.debiased_fhat = std::clamp(query_fhat + est.bias, 0.0, 1.0);
  est.effective_weight = den;
  return est;
}

struct LcbProfile {
  std::vector<LcbEstimate> estimates;       // one per supported query, in order
  std::vector<std::size_t> failed_queries;  // indices that had no support
  std::vector<std::string> warnings;
};

inline LcbProfile lcb_profile(const AuditDataset& d, const KernelSpec& k_spec,
                              const KernelSpec& l_spec,
                              const std::vector<std::pair<Eigen::VectorXd, double>>& queries) {
  LcbProfile out;
  out.estimates.reserve(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    try {
      out.estimates.push_back(lcb_at(d, k_spec, l_spec, queries[q].first, queries[q].second));
    } catch (const NoSupportError& e) {
      out.failed_queries.push_back(q);
      out.warnings.push_back("query " + std::to_string(q) + ": " + e.what());
    }
  }
  return out;
}

// Profile over the dataset's own records.
inline LcbProfile lcb_profile(const AuditDataset& d, const KernelSpec& k_spec,
                              const KernelSpec& l_spec) {
  std::vector<std::pair<Eigen::VectorXd, double>> queries;
  queries.reserve(static_cast<std::size_t>(d.size()));
  for (Eigen::Index i = 0; i < d.size(); ++i)
    queries.emplace_back(d.features().row(i).transpose(), d.scores()[i]);
  return lcb_profile(d, k_spec, l_spec, queries);
}

struct GroupTrend {
  std::map<double, std::vector<double>> coefficients;  // group value -> lowest-order-first
  std::vector<std::string> warnings;
};

// OLS polynomial fit of bias against the axis feature, one fit per distinct
// value of the grouping feature. group_feature = -1 pools everything into a
// single group (keyed 0).
inline GroupTrend group_trend(const std::vector<LcbEstimate>& estimates, int group_feature,
                              int axis_feature, int degree = 3) {
  if (degree < 0) throw std::invalid_argument("group_trend: degree must be >= 0");
  std::map<double, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double key = group_feature >= 0 ? estimates[i].query_x[group_feature] : 0.0;
    groups[key].push_back(i);
  }
  GroupTrend out;
  for (const auto& [key, idx] : groups) {
    const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
    if (m < degree + 1) {
      out.warnings.push_back("group " + format_double(key) + " has " + std::to_string(idx.size()) +
                             " points, fewer than degree+1; skipped");
      continue;
    }
    Eigen::MatrixXd V(m, degree + 1);
    Eigen::VectorXd b(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const double t = estimates[idx[static_cast<std::size_t>(r)]].query_x[axis_feature];
      double pw = 1.0;
      for (int c = 0; c <= degree; ++c) {
        V(r, c) = pw;
        pw *= t;
      }
      b[r] = estimates[idx[static_cast<std::size_t>(r)]].bias;
    }
    const Eigen::VectorXd coef = V.colPivHouseholderQr().solve(b);
    out.coefficients[key] = std::vector<double>(coef.data(), coef.data() + coef.size());
  }
  return out;
}

}  // namespace klce
