#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "nvsense/errors.hpp"

namespace nvsense {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_sigma = 0.0;
  double intercept_sigma = 0.0;
};

// Weighted least-squares straight line. Weights are 1/sigma_i^2 style
// relative weights; when absent every point counts equally. The reported
// sigmas scale the covariance by the reduced chi^2, so they stay meaningful
// for unit weights too.
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y,
                            const std::vector<double>& w = {}) {
  const std::size_t n = x.size();
  if (n != y.size() || (!w.empty() && w.size() != n) || n < 2) {
    throw ValidationError("linear_fit: need >= 2 points with matching arrays");
  }
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    sw += wi;
    sx += wi * x[i];
    sy += wi * y[i];
    sxx += wi * x[i] * x[i];
    sxy += wi * x[i] * y[i];
  }
  const double det = sw * sxx - sx * sx;
  if (!(std::abs(det) > 0)) throw ValidationError("linear_fit: degenerate abscissae");
  LinearFit out;
  out.slope = (sw * sxy - sx * sy) / det;
  out.intercept = (sxx * sy - sx * sxy) / det;
  double chi2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    const double r = y[i] - (out.slope * x[i] + out.intercept);
    chi2 += wi * r * r;
  }
  const double dof = static_cast<double>(n) - 2.0;
  const double scale = dof > 0 ? chi2 / dof : 0.0;
  out.slope_sigma = std::sqrt(std::max(0.0, scale * sw / det));
  out.intercept_sigma = std::sqrt(std::max(0.0, scale * sxx / det));
  return out;
}

// Slope of log(y) vs log(x); inputs must be strictly positive.
inline LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw ValidationError("loglog_fit: inputs must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  return linear_fit(lx, ly);
}

struct FitOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-13;  // on the relative cost decrease
  double initial_lambda = 1e-3;
  double max_lambda = 1e12;
};

struct FitResult {
  Eigen::VectorXd params;
  double rms_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd covariance;  // sigma^2 (J^T J)^-1 at the solution
};

// Small dense Levenberg-Marquardt with forward-difference Jacobians.
// `model` fills the residual vector for a parameter vector; residuals should
// already carry any per-point weighting. Throws FitDiverged when residuals
// go non-finite or the damping exhausts its range without progress.
template <typename Model>
FitResult levenberg_marquardt(Model&& model, Eigen::VectorXd p, std::size_t n_residuals,
                              const FitOptions& opt = {}) {
  const auto np = p.size();
  Eigen::VectorXd r(n_residuals), r_trial(n_residuals), rj(n_residuals);
  model(p, r);
  if (!r.allFinite()) throw FitDiverged("levenberg_marquardt: non-finite residuals at start");
  double cost = r.squaredNorm();
  double lambda = opt.initial_lambda;

  Eigen::MatrixXd jac(n_residuals, np);
  FitResult out;
  out.converged = false;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    // Forward-difference Jacobian with per-parameter relative steps.
    for (Eigen::Index j = 0; j < np; ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(p[j]));
      Eigen::VectorXd pj = p;
      pj[j] += h;
      model(pj, rj);
      jac.col(j) = (rj - r) / h;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;

    bool stepped = false;
    while (lambda <= opt.max_lambda) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-30);
      const Eigen::VectorXd delta = damped.ldlt().solve(jtr);
      const Eigen::VectorXd p_trial = p - delta;
      model(p_trial, r_trial);
      const double cost_trial = r_trial.allFinite()
                                    ? r_trial.squaredNorm()
                                    : std::numeric_limits<double>::infinity();
      if (cost_trial < cost) {
        p = p_trial;
        r = r_trial;
        const double drop = (cost - cost_trial) / std::max(cost, 1e-300);
        cost = cost_trial;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (drop < opt.gradient_tolerance) out.converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) {
      // No downhill step found at any damping: either converged or stuck.
      out.converged = cost >= 0 && r.allFinite();
      break;
    }
    if (out.converged) break;
  }
  if (!r.allFinite()) throw FitDiverged("levenberg_marquardt: non-finite residuals");

  out.params = p;
  out.iterations = it + 1;
  out.rms_residual = std::sqrt(cost / static_cast<double>(n_residuals));
  // Covariance from the final Jacobian, scaled by reduced chi^2.
  for (Eigen::Index j = 0; j < np; ++j) {
    const double h = 1e-7 * std::max(1.0, std::abs(p[j]));
    Eigen::VectorXd pj = p;
    pj[j] += h;
    model(pj, rj);
    jac.col(j) = (rj - r) / h;
  }
  const double dof = static_cast<double>(n_residuals) - static_cast<double>(np);
  const double scale = dof > 0 ? cost / dof : 0.0;
  Eigen::MatrixXd jtj = jac.transpose() * jac;
  out.covariance = scale * jtj.ldlt().solve(Eigen::MatrixXd::Identity(np, np));
  return out;
}

}  // namespace nvsense
