#pragma once

// Post-hoc recalibrators: Platt scaling, temperature scaling, and isotonic
// regression. All operate on the probability outputs; Platt and temperature
// work in logit space with scores clipped to [1e-6, 1 - 1e-6].

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "klce/dataset.hpp"

namespace klce {

inline constexpr double kScoreClip = 1e-6;

inline double clip_score(double p) { return std::clamp(p, kScoreClip, 1.0 - kScoreClip); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

struct PlattParams {
  double a = 1.0;
  double b = 0.0;
};
struct TemperatureParams {
  double t = 1.0;
};
struct IsotonicParams {
  std::vector<double> breakpoints;  // strictly increasing scores
  std::vector<double> values;       // nondecreasing, in [0, 1]
};

class Recalibrator {
 public:
  Recalibrator() = default;
  explicit Recalibrator(PlattParams p) : params_(p) {}
  explicit Recalibrator(TemperatureParams p) : params_(p) {
    if (!(p.t > 0.0)) throw std::invalid_argument("temperature must be positive");
  }
  explicit Recalibrator(IsotonicParams p) : params_(std::move(p)) {}

  bool fitted() const { return !std::holds_alternative<std::monostate>(params_); }

  double apply_score(double p) const {
    if (const auto* pl = std::get_if<PlattParams>(&params_))
      return sigmoid(pl->a * logit(clip_score(p)) + pl->b);
    if (const auto* tp = std::get_if<TemperatureParams>(&params_))
      return sigmoid(logit(clip_score(p)) / tp->t);
    if (const auto* iso = std::get_if<IsotonicParams>(&params_)) {
      // Stepwise-constant: value of the largest breakpoint <= p, flat
      // extrapolation below the first one.
      const auto& bp = iso->breakpoints;
      auto it = std::upper_bound(bp.begin(), bp.end(), p);
      if (it == bp.begin()) return iso->values.front();
      return iso->values[static_cast<std::size_t>(std::distance(bp.begin(), it)) - 1];
    }
    throw std::logic_error("recalibrator is not fitted");
  }

  AuditDataset apply(const AuditDataset& d) const {
    Eigen::VectorXd out(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) out[i] = apply_score(d.scores()[i]);
    return d.with_scores(std::move(out));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    if (const auto* pl = std::get_if<PlattParams>(&params_))
      j = {{"kind", "platt"}, {"parameters", {{"a", pl->a}, {"b", pl->b}}}};
    else if (const auto* tp = std::get_if<TemperatureParams>(&params_))
      j = {{"kind", "temperature"}, {"parameters", {{"t", tp->t}}}};
    else if (const auto* iso = std::get_if<IsotonicParams>(&params_))
      j = {{"kind", "isotonic"},
           {"parameters", {{"breakpoints", iso->breakpoints}, {"values", iso->values}}}};
    else
      throw std::logic_error("recalibrator is not fitted");
    return j;
  }

  static Recalibrator from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind");
    const auto& p = j.at("parameters");
    if (kind == "platt") return Recalibrator(PlattParams{p.at("a"), p.at("b")});
    if (kind == "temperature") return Recalibrator(TemperatureParams{p.at("t")});
    if (kind == "isotonic")
      return Recalibrator(IsotonicParams{p.at("breakpoints").get<std::vector<double>>(),
                                         p.at("values").get<std::vector<double>>()});
    throw std::invalid_argument("unknown recalibrator kind '" + kind + "'");
  }

  const PlattParams* platt() const { return std::get_if<PlattParams>(&params_); }
  const TemperatureParams* temperature() const { return std::get_if<TemperatureParams>(&params_); }
  const IsotonicParams* isotonic() const { return std::get_if<IsotonicParams>(&params_); }

 private:
  std::variant<std::monostate, PlattParams, TemperatureParams, IsotonicParams> params_;
};

namespace detail {

inline void require_both_classes(const AuditDataset& d, const char* what) {
  const double s = d.labels().sum();
  if (s == 0.0 || s == static_cast<double>(d.size()))
    throw std::invalid_argument(std::string(what) + ": calibration set contains a single class");
}

inline double bernoulli_nll(const Eigen::VectorXd& z, const Eigen::VectorXd& y, double a, double b) {
  double nll = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double t = a * z[i] + b;
    // log(1 + exp(t)) - y t, evaluated stably
    nll += (t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t))) - y[i] * t;
  }
  return nll;
}

}  // namespace detail

// Fits sigmoid(a * logit(p) + b) by damped Newton on the Bernoulli NLL.
inline Recalibrator fit_platt(const AuditDataset& calib) {
  detail::require_both_classes(calib, "fit_platt");
  const Eigen::Index n = calib.size();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = logit(clip_score(calib.scores()[i]));
  const Eigen::VectorXd& y = calib.labels();

  double a = 1.0, b = 0.0;
  double nll = detail::bernoulli_nll(z, y, a, b);
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = sigmoid(a * z[i] + b);
      const double r = mu - y[i];
      const double w = mu * (1.0 - mu);
      grad[0] += r * z[i];
      grad[1] += r;
      hess(0, 0) += w * z[i] * z[i];
      hess(0, 1) += w * z[i];
      hess(1, 1) += w;
    }
    hess(1, 0) = hess(0, 1);
    if (grad.lpNorm<Eigen::Infinity>() < 1e-8) return Recalibrator(PlattParams{a, b});

    hess(0, 0) += 1e-12;
    hess(1, 1) += 1e-12;
    const Eigen::Vector2d dir = hess.ldlt().solve(grad);
    double step = 1.0;
    bool moved = false;
    for (int halvings = 0; halvings < 50; ++halvings) {
      const double ta = a - step * dir[0], tb = b - step * dir[1];
      const double trial = detail::bernoulli_nll(z, y, ta, tb);
      if (trial <= nll) {
        moved = (ta != a || tb != b);
        a = ta;
        b = tb;
        nll = trial;
        break;
      }
      step *= 0.5;
    }
    // Once the NLL is flat to rounding the line search cannot move, even
    // though the summed gradient may sit above the absolute tolerance; the
    // parameters are then at the floating-point optimum.
    if (!moved) break;
  }
  // The iteration cap is a valid terminus as long as the remaining gradient
  // is small relative to the sample count; only a genuinely unconverged fit
  // is an error.
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = sigmoid(a * z[i] + b) - y[i];
    grad[0] += r * z[i];
    grad[1] += r;
  }
  const double gnorm = grad.lpNorm<Eigen::Infinity>();
  if (gnorm <= 1e-6 * static_cast<double>(n)) return Recalibrator(PlattParams{a, b});
  throw std::runtime_error("fit_platt did not converge: final gradient norm " +
                           format_double(gnorm));
}

// Minimizes NLL of sigmoid(logit(p) / T) over T in [1e-2, 1e2] by
// golden-section search to bracket width 1e-6.
inline Recalibrator fit_temperature(const AuditDataset& calib) {
  detail::require_both_classes(calib, "fit_temperature");
  const Eigen::Index n = calib.size();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = logit(clip_score(calib.scores()[i]));
  const Eigen::VectorXd& y = calib.labels();

  const auto nll = [&](double t) { return detail::bernoulli_nll(z, y, 1.0 / t, 0.0); };
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 1e-2, hi = 1e2;
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = nll(x1), f2 = nll(x2);
  while (hi - lo > 1e-6) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = nll(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = nll(x2);
    }
  }
  return Recalibrator(TemperatureParams{0.5 * (lo + hi)});
}

// Pool-adjacent-violators on (score, label) sorted by score. Records with
// equal scores are merged first so the fitted map is a function of the score.
inline Recalibrator fit_isotonic(const AuditDataset& calib) {
  const Eigen::Index n = calib.size();
  std::vector<std::pair<double, double>> pts(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    pts[static_cast<std::size_t>(i)] = {calib.scores()[i], calib.labels()[i]};
  std::sort(pts.begin(), pts.end());

  struct Block {
    double score_lo;
    double sum;
    double weight;
    double mean() const { return sum / weight; }
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < pts.size();) {
    double sum = 0.0, w = 0.0;
    const double s = pts[i].first;
    while (i < pts.size() && pts[i].first == s) {
      sum += pts[i].second;
      w += 1.0;
      ++i;
    }
    blocks.push_back({s, sum, w});
    while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean() >= blocks.back().mean()) {
      Block top = blocks.back();
      blocks.pop_back();
      blocks.back().sum += top.sum;
      blocks.back().weight += top.weight;
    }
  }
  IsotonicParams params;
  for (const auto& b : blocks) {
    params.breakpoints.push_back(b.score_lo);
    params.values.push_back(b.mean());
  }
  return Recalibrator(std::move(params));
}

}  // namespace klce
