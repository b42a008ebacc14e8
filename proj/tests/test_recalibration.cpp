#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "klce/recalibration.hpp"
#include "test_util.hpp"

using namespace klce;

// Every score s appears 100 times with exactly round(100 s) positive labels,
// so the empirical class frequency equals s and the NLL optimum sits exactly
// at Platt (1, 0) / temperature 1.
static AuditDataset exact_frequency_dataset() {
  std::vector<double> scores, labels;
  for (int j = 2; j <= 98; j += 2) {
    const double s = j / 100.0;
    for (int c = 0; c < 100; ++c) {
      scores.push_back(s);
      labels.push_back(c < j ? 1.0 : 0.0);
    }
  }
  const Eigen::Index n = static_cast<Eigen::Index>(scores.size());
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, 1);
  Eigen::VectorXd y(n), p(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = labels[static_cast<std::size_t>(i)];
    p[i] = scores[static_cast<std::size_t>(i)];
  }
  return AuditDataset(std::move(X), std::move(y), std::move(p), {"x"});
}

TEST_CASE("platt fit recovers the known optimum (a, b) = (1, 0)") {
  const Recalibrator r = fit_platt(exact_frequency_dataset());
  REQUIRE(r.platt() != nullptr);
  CHECK(r.platt()->a == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(std::abs(r.platt()->b) < 1e-3);
}

TEST_CASE("platt solution is a stationary point of the NLL") {
  const AuditDataset d = exact_frequency_dataset();
  const Recalibrator r = fit_platt(d);
  const double a = r.platt()->a, b = r.platt()->b;
  Eigen::VectorXd z(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) z[i] = logit(clip_score(d.scores()[i]));
  const auto nll = [&](double aa, double bb) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      const double t = aa * z[i] + bb;
      acc += std::log1p(std::exp(-std::abs(t))) + std::max(t, 0.0) - d.labels()[i] * t;
    }
    return acc;
  };
  const double h = 1e-5;
  const double ga = (nll(a + h, b) - nll(a - h, b)) / (2.0 * h);
  const double gb = (nll(a, b + h) - nll(a, b - h)) / (2.0 * h);
  CHECK(std::abs(ga) < 1e-3);  // finite-difference resolution over ~5000 terms
  CHECK(std::abs(gb) < 1e-3);
}

TEST_CASE("single-class calibration sets are rejected") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(4, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
  Eigen::VectorXd p(4);
  p << 0.2, 0.4, 0.6, 0.8;
  const AuditDataset d(X, y, p, {"x"});
  CHECK_THROWS_AS(fit_platt(d), std::invalid_argument);
  CHECK_THROWS_AS(fit_temperature(d), std::invalid_argument);
}

TEST_CASE("temperature fit recovers T = 1 on calibrated scores") {
  const Recalibrator r = fit_temperature(exact_frequency_dataset());
  REQUIRE(r.temperature() != nullptr);
  CHECK(r.temperature()->t == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("temperature 1 is the identity map within clipping tolerance") {
  const Recalibrator r{TemperatureParams{1.0}};
  for (double p : {0.01, 0.2, 0.5, 0.77, 0.99})
    CHECK(r.apply_score(p) == doctest::Approx(p).epsilon(1e-9));
}

TEST_CASE("platt (1, 0) is the identity map within clipping tolerance") {
  const Recalibrator r{PlattParams{1.0, 0.0}};
  for (double p : {0.05, 0.3, 0.6, 0.95})
    CHECK(r.apply_score(p) == doctest::Approx(p).epsilon(1e-9));
}

TEST_CASE("temperature and platt preserve score ranking") {
  const AuditDataset d = test_util::random_dataset(901, 200, 1);
  for (const Recalibrator& r :
       {Recalibrator{TemperatureParams{0.37}}, Recalibrator{PlattParams{2.1, -0.4}}}) {
    std::vector<double> in(d.scores().data(), d.scores().data() + d.size());
    std::sort(in.begin(), in.end());
    double prev = -1.0;
    for (double s : in) {
      const double out = r.apply_score(s);
      CHECK(out >= prev);
      prev = out;
    }
  }
}

TEST_CASE("isotonic pools a single violating pair to 0.5") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(2, 1);
  Eigen::VectorXd y(2), p(2);
  y << 1, 0;
  p << 0.2, 0.8;
  const Recalibrator r = fit_isotonic(AuditDataset(X, y, p, {"x"}));
  REQUIRE(r.isotonic() != nullptr);
  CHECK(r.isotonic()->values == std::vector<double>{0.5});
  CHECK(r.apply_score(0.2) == 0.5);
  CHECK(r.apply_score(0.8) == 0.5);
}

TEST_CASE("nondecreasing labels are reproduced exactly") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(4, 1);
  Eigen::VectorXd y(4), p(4);
  y << 0, 0, 1, 1;
  p << 0.1, 0.3, 0.6, 0.9;
  const Recalibrator r = fit_isotonic(AuditDataset(X, y, p, {"x"}));
  CHECK(r.apply_score(0.1) == 0.0);
  CHECK(r.apply_score(0.3) == 0.0);
  CHECK(r.apply_score(0.6) == 1.0);
  CHECK(r.apply_score(0.9) == 1.0);
}

// Exact isotonic-regression oracle via the min-max representation:
// fit[k] = max_{i<=k} min_{j>=k} mean(y[i..j]) on data sorted by score.
static std::vector<double> isotonic_minimax(const std::vector<double>& y) {
  const std::size_t n = y.size();
  std::vector<double> fit(n);
  for (std::size_t k = 0; k < n; ++k) {
    double best = -1.0;
    for (std::size_t i = 0; i <= k; ++i) {
      double worst = 2.0;
      double sum = 0.0;
      for (std::size_t j = i; j < n; ++j) {
        sum += y[j];
        if (j >= k) worst = std::min(worst, sum / static_cast<double>(j - i + 1));
      }
      best = std::max(best, worst);
    }
    fit[k] = best;
  }
  return fit;
}

TEST_CASE("PAVA equals the exhaustive min-max oracle") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    auto gen = rng::derive_stream(910 + seed, 0);
    const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng::uniform01(gen) * 26);
    // distinct scores so the fitted map is compared point by point
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      scores[static_cast<std::size_t>(i)] = (static_cast<double>(i) + rng::uniform01(gen) * 0.5) /
                                            static_cast<double>(n + 1);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, 1);
    Eigen::VectorXd y(n), p(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = scores[static_cast<std::size_t>(i)];
      y[i] = rng::uniform01(gen) < 0.5 ? 0.0 : 1.0;
    }
    const AuditDataset d(X, y, p, {"x"});
    const Recalibrator r = fit_isotonic(d);
    const std::vector<double> labels(y.data(), y.data() + n);
    const std::vector<double> oracle = isotonic_minimax(labels);
    for (Eigen::Index i = 0; i < n; ++i)
      CHECK(r.apply_score(p[i]) ==
            doctest::Approx(oracle[static_cast<std::size_t>(i)]).epsilon(1e-10));
  }
}

TEST_CASE("isotonic output is nondecreasing over random queries") {
  const AuditDataset d = test_util::random_dataset(920, 80, 1);
  const Recalibrator r = fit_isotonic(d);
  auto gen = rng::derive_stream(921, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = rng::uniform01(gen), b = rng::uniform01(gen);
    const double lo = std::min(a, b), hi = std::max(a, b);
    CHECK(r.apply_score(lo) <= r.apply_score(hi));
    CHECK(r.apply_score(lo) >= 0.0);
    CHECK(r.apply_score(hi) <= 1.0);
  }
}

TEST_CASE("apply replaces scores only") {
  const AuditDataset d = test_util::random_dataset(930, 40, 2);
  const Recalibrator r{TemperatureParams{2.0}};
  const AuditDataset out = r.apply(d);
  CHECK(out.labels() == d.labels());
  CHECK(out.features() == d.features());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    CHECK(out.scores()[i] >= 0.0);
    CHECK(out.scores()[i] <= 1.0);
    CHECK(out.scores()[i] == r.apply_score(d.scores()[i]));
  }
}

TEST_CASE("unfitted recalibrators refuse to apply") {
  const Recalibrator r;
  CHECK_FALSE(r.fitted());
  CHECK_THROWS_AS(r.apply_score(0.5), std::logic_error);
  CHECK_THROWS_AS(r.to_json(), std::logic_error);
}

TEST_CASE("recalibrators round-trip through JSON") {
  const AuditDataset d = test_util::random_dataset(940, 50, 1);
  for (const Recalibrator& r : {fit_isotonic(d), Recalibrator{PlattParams{1.3, 0.2}},
                                Recalibrator{TemperatureParams{0.8}}}) {
    const Recalibrator back = Recalibrator::from_json(r.to_json());
    for (double s : {0.1, 0.33, 0.5, 0.72, 0.9})
      CHECK(back.apply_score(s) == r.apply_score(s));
  }
}
