#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "nvsense/fit.hpp"

using namespace nvsense;

TEST_CASE("linear fit recovers an exact line") {
  std::vector<double> x, y;
  for (int i = 0; i <= 5; ++i) {
    x.push_back(i);
    y.push_back(3.0 * i - 2.0);
  }
  const LinearFit fit = linear_fit(x, y);
  CHECK(fit.slope == Catch::Approx(3.0).margin(1e-12));
  CHECK(fit.intercept == Catch::Approx(-2.0).margin(1e-12));
  CHECK(fit.slope_sigma == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("zero weight removes a point") {
  const std::vector<double> x = {0.0, 1.0, 2.0};
  const std::vector<double> y = {0.0, 1.0, 10.0};
  const LinearFit fit = linear_fit(x, y, {1.0, 1.0, 0.0});
  CHECK(fit.slope == Catch::Approx(1.0).margin(1e-12));
  CHECK(fit.intercept == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("slope uncertainty scales with the scatter") {
  std::vector<double> x, y_small, y_big;
  for (int i = 0; i < 20; ++i) {
    const double noise = (i % 2 ? 1.0 : -1.0);
    x.push_back(i);
    y_small.push_back(2.0 * i + 0.01 * noise);
    y_big.push_back(2.0 * i + 1.0 * noise);
  }
  const LinearFit small = linear_fit(x, y_small);
  const LinearFit big = linear_fit(x, y_big);
  CHECK(big.slope_sigma == Catch::Approx(100.0 * small.slope_sigma).epsilon(1e-6));
  CHECK(big.slope == Catch::Approx(small.slope).margin(0.1));
}

TEST_CASE("linear fit input validation") {
  CHECK_THROWS_AS(linear_fit({1.0}, {1.0}), ValidationError);
  CHECK_THROWS_AS(linear_fit({1.0, 2.0}, {1.0}), ValidationError);
  CHECK_THROWS_AS(linear_fit({1.0, 2.0}, {1.0, 2.0}, {1.0}), ValidationError);
  CHECK_THROWS_AS(linear_fit({2.0, 2.0}, {1.0, 2.0}), ValidationError);
}

TEST_CASE("log-log fit finds a power law exponent") {
  std::vector<double> t, y;
  for (int i = 0; i < 12; ++i) {
    const double ti = 1e-3 * std::pow(10.0, i / 4.0);
    t.push_back(ti);
    y.push_back(2.0 / std::sqrt(ti));
  }
  const LinearFit fit = loglog_fit(t, y);
  CHECK(fit.slope == Catch::Approx(-0.5).margin(1e-12));
  CHECK_THROWS_AS(loglog_fit({1.0, -2.0}, {1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(loglog_fit({1.0, 2.0}, {0.0, 1.0}), ValidationError);
}

TEST_CASE("levenberg-marquardt recovers exponential decay parameters") {
  const double a_true = 0.8, b_true = 3.5e4;
  std::vector<double> t, y;
  for (int i = 0; i < 40; ++i) {
    t.push_back(i * 1e-6);
    y.push_back(a_true * std::exp(-b_true * t.back()));
  }
  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      r[static_cast<Eigen::Index>(i)] = p[0] * std::exp(-p[1] * t[i]) - y[i];
    }
  };
  Eigen::VectorXd p0(2);
  p0 << 1.0, 2e4;
  const FitResult fit = levenberg_marquardt(model, p0, t.size());
  CHECK(fit.converged);
  CHECK(fit.params[0] == Catch::Approx(a_true).epsilon(1e-9));
  CHECK(fit.params[1] == Catch::Approx(b_true).epsilon(1e-9));
  CHECK(fit.rms_residual < 1e-12);
  CHECK(fit.covariance.rows() == 2);
}

TEST_CASE("levenberg-marquardt recovers an offset cosine") {
  const double a_true = 0.85, b_true = 0.15, f_true = 2.5e6, phi_true = 0.4;
  std::vector<double> t, y;
  for (int i = 0; i < 120; ++i) {
    t.push_back(i * 1e-8);
    y.push_back(a_true - b_true * std::cos(2 * std::numbers::pi * f_true * t.back() + phi_true));
  }
  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      r[static_cast<Eigen::Index>(i)] =
          p[0] - p[1] * std::cos(2 * std::numbers::pi * p[2] * 1e6 * t[i] + p[3]) - y[i];
    }
  };
  Eigen::VectorXd p0(4);
  p0 << 0.9, 0.1, 2.45, 0.2;  // frequency in MHz keeps parameter scales ~1
  const FitResult fit = levenberg_marquardt(model, p0, t.size());
  CHECK(fit.converged);
  CHECK(fit.params[0] == Catch::Approx(a_true).epsilon(1e-8));
  CHECK(fit.params[1] == Catch::Approx(b_true).epsilon(1e-8));
  CHECK(fit.params[2] == Catch::Approx(f_true / 1e6).epsilon(1e-8));
  CHECK(fit.params[3] == Catch::Approx(phi_true).epsilon(1e-7));
}

TEST_CASE("levenberg-marquardt reports divergence on non-finite residuals") {
  auto model = [](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    r[0] = std::sqrt(p[0]);  // NaN for negative parameter
    r[1] = p[0] - 2.0;
  };
  Eigen::VectorXd p0(1);
  p0 << -1.0;
  CHECK_THROWS_AS(levenberg_marquardt(model, p0, 2), FitDiverged);
}
