#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nvsense/errors.hpp"

namespace nvsense {

// The four NV orientations as integer lattice directions, NV1..NV4 order.
// Kept in integer form so the tetrahedral identities (pairwise dot product
// -1/3 after normalization, zero sum, unit norm) can be checked in exact
// arithmetic: l_i . l_j = -1 for i != j, |l_i|^2 = 3, sum l_i = 0.
inline constexpr std::array<std::array<int, 3>, 4> axis_lattice_vectors() {
  return {{{1, 1, 1}, {-1, 1, -1}, {1, -1, -1}, {-1, -1, 1}}};
}

struct AxisSet {
  std::array<Eigen::Vector3d, 4> axes;  // unit vectors, NV1..NV4

  // 1-based accessor matching the NV1..NV4 labels used everywhere.
  const Eigen::Vector3d& unit(int axis_index) const {
    if (axis_index < 1 || axis_index > 4) {
      throw ValidationError("axis_index must be in 1..4, got " + std::to_string(axis_index));
    }
    return axes[static_cast<std::size_t>(axis_index - 1)];
  }
};

inline AxisSet axis_unit_vectors() {
  AxisSet out;
  const auto lattice = axis_lattice_vectors();
  const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
  for (std::size_t n = 0; n < 4; ++n) {
    out.axes[n] = inv_sqrt3 * Eigen::Vector3d(lattice[n][0], lattice[n][1], lattice[n][2]);
  }
  return out;
}

// B . u_n for the requested axis (1-based NV label).
inline double project_field(const Eigen::Vector3d& b_t, int axis_index) {
  return axis_unit_vectors().unit(axis_index).dot(b_t);
}

enum class Component { x = 0, y = 1, z = 2 };

inline const char* component_name(Component k) {
  switch (k) {
    case Component::x: return "x";
    case Component::y: return "y";
    case Component::z: return "z";
  }
  throw ValidationError("unknown component");
}

// Per-axis readout signs: -1 marks a 180-degree flip of the final pulse on
// that axis. Applying the flips makes the summed axis responses pick out a
// single Cartesian component: sum_n signs[n] * u_n = (4/sqrt(3)) * e_k.
struct SignPattern {
  Component component;
  std::array<int, 4> signs;  // +1 or -1, NV1..NV4

  Eigen::Vector3d signed_axis_sum() const {
    const AxisSet u = axis_unit_vectors();
    Eigen::Vector3d s = Eigen::Vector3d::Zero();
    for (std::size_t n = 0; n < 4; ++n) s += signs[n] * u.axes[n];
    return s;
  }
};

inline SignPattern sign_pattern(Component k) {
  switch (k) {
    case Component::x: return {k, {+1, -1, +1, -1}};  // flips NV2, NV4
    case Component::y: return {k, {+1, +1, -1, -1}};  // flips NV3, NV4
    case Component::z: return {k, {+1, -1, -1, +1}};  // flips NV2, NV3
  }
  throw ValidationError("unknown component");
}

// First-order Zeeman pair (f_lower, f_upper) per axis: D -+ gamma*|B.u_n|.
inline std::array<std::pair<double, double>, 4> resonance_frequencies(
    const Eigen::Vector3d& b_static_t, double d_hz, double gamma_hz_per_t) {
  if (!(d_hz > 0) || !(gamma_hz_per_t > 0)) {
    throw ValidationError("resonance_frequencies: D and gamma must be positive");
  }
  const AxisSet u = axis_unit_vectors();
  std::array<std::pair<double, double>, 4> out;
  for (std::size_t n = 0; n < 4; ++n) {
    const double shift = gamma_hz_per_t * std::abs(u.axes[n].dot(b_static_t));
    out[n] = {d_hz - shift, d_hz + shift};
  }
  return out;
}

struct CalibrationOptions {
  // Refine D from the zero-sum constraint on signed projections. Without
  // this the tetrahedral constraint generally cannot be met exactly and the
  // best-fit residual absorbs any error in the assumed D.
  bool fit_d = true;
  // Largest acceptable rms frequency misfit before giving up.
  double residual_threshold_hz = 1e6;
  // Candidates within this factor of the best residual are reported.
  double candidate_factor = 2.0;
  // A fitted D farther than this from the prior is treated as spurious.
  double d_prior_window_hz = 5e7;
  enum class Branch { lower, upper } branch = Branch::lower;
};

struct CalibrationCandidate {
  std::array<int, 4> signs;   // sign of B.u_n assumed per axis
  Eigen::Vector3d b_t;
  double d_hz;                // D used for this candidate (fitted or prior)
  double residual_hz;         // rms of f_model - f_measured
};

struct StaticFieldCalibration {
  Eigen::Vector3d b_static_t;
  std::array<double, 4> f_hz;  // measured inputs, NV1..NV4
  double d_hz;
  double gamma_hz_per_t;
  double residual_hz;
  std::vector<CalibrationCandidate> candidates;  // sorted, best first
};

namespace detail {

// Least-squares inverse of the projection map. sum_n u_n u_n^T = (4/3) I,
// so the minimizer of sum_n (B.u_n - p_n)^2 is B = (3/4) sum_n p_n u_n.
inline Eigen::Vector3d solve_projections(const std::array<double, 4>& p_t) {
  const AxisSet u = axis_unit_vectors();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (std::size_t n = 0; n < 4; ++n) b += p_t[n] * u.axes[n];
  return 0.75 * b;
}

}  // namespace detail

// Recovers the static field from the four measured resonance frequencies of
// one Zeeman branch. Scans all 2^4 sign assignments of the projection
// magnitudes |B.u_n| = |D - f_n| / gamma, solving each by least squares.
// When fit_d is set and a sign assignment has a nonzero sign sum, the
// zero-sum identity sum_n B.u_n = 0 pins D = sum_n s_n f_n / sum_n s_n
// exactly; balanced assignments keep the prior D (D and B are not jointly
// identifiable there). The global B <-> -B ambiguity is physical; the
// returned field has its first nonzero axis projection positive, and all
// assignments within candidate_factor of the best residual are reported.
inline StaticFieldCalibration calibrate_static_field(const std::array<double, 4>& f_hz,
                                                     double d_hz, double gamma_hz_per_t,
                                                     const CalibrationOptions& opt = {}) {
  if (!(d_hz > 0) || !(gamma_hz_per_t > 0)) {
    throw ValidationError("calibrate_static_field: D and gamma must be positive");
  }
  const bool lower = opt.branch == CalibrationOptions::Branch::lower;
  for (double f : f_hz) {
    if (lower ? f > d_hz : f < d_hz) {
      throw InvalidBranch("calibrate_static_field: measured frequencies straddle D");
    }
  }

  const AxisSet u = axis_unit_vectors();
  const double branch_sign = lower ? 1.0 : -1.0;  // m_n = branch_sign*(D - f_n)/gamma
  std::vector<CalibrationCandidate> all;
  all.reserve(16);
  for (int mask = 0; mask < 16; ++mask) {
    std::array<int, 4> s{};
    int sign_sum = 0;
    for (int n = 0; n < 4; ++n) {
      s[n] = (mask >> n) & 1 ? -1 : +1;
      sign_sum += s[n];
    }
    double d_eff = d_hz;
    if (opt.fit_d && sign_sum != 0) {
      double sf = 0;
      for (int n = 0; n < 4; ++n) sf += s[n] * f_hz[n];
      const double d_fit = sf / sign_sum;
      // Keep the fitted D only if it is on the right side of every line and
      // plausibly close to the prior; otherwise fall back to the prior.
      bool valid = std::abs(d_fit - d_hz) <= opt.d_prior_window_hz;
      for (double f : f_hz) {
        if (lower ? d_fit < f : d_fit > f) valid = false;
      }
      if (valid) d_eff = d_fit;
    }
    std::array<double, 4> p{};
    for (int n = 0; n < 4; ++n) {
      p[n] = s[n] * branch_sign * (d_eff - f_hz[n]) / gamma_hz_per_t;
    }
    CalibrationCandidate c;
    c.signs = s;
    c.d_hz = d_eff;
    c.b_t = detail::solve_projections(p);
    double ss = 0;
    for (int n = 0; n < 4; ++n) {
      const double f_model = d_eff - branch_sign * gamma_hz_per_t * std::abs(u.axes[n].dot(c.b_t));
      const double r = f_model - f_hz[n];
      ss += r * r;
    }
    c.residual_hz = std::sqrt(ss / 4.0);
    all.push_back(c);
  }

  // Order: residual, then proximity of D to the prior, then the sign
  // convention tie-break (first nonzero projection positive).
  auto orientation_key = [&u](const CalibrationCandidate& c) {
    for (std::size_t n = 0; n < 4; ++n) {
      const double pn = u.axes[n].dot(c.b_t);
      if (std::abs(pn) > 1e-15 * c.b_t.norm()) return pn > 0 ? 0 : 1;
    }
    return 0;
  };
  std::stable_sort(all.begin(), all.end(),
                   [&](const CalibrationCandidate& a, const CalibrationCandidate& b) {
                     if (a.residual_hz != b.residual_hz) return a.residual_hz < b.residual_hz;
                     const double da = std::abs(a.d_hz - d_hz), db = std::abs(b.d_hz - d_hz);
                     if (da != db) return da < db;
                     return orientation_key(a) < orientation_key(b);
                   });

  const CalibrationCandidate& best = all.front();
  if (best.residual_hz > opt.residual_threshold_hz) {
    throw NoConsistentSignAssignment(
        "calibrate_static_field: best rms residual " + std::to_string(best.residual_hz) +
        " Hz exceeds threshold " + std::to_string(opt.residual_threshold_hz) + " Hz");
  }

  StaticFieldCalibration out;
  out.b_static_t = best.b_t;
  out.f_hz = f_hz;
  out.d_hz = best.d_hz;
  out.gamma_hz_per_t = gamma_hz_per_t;
  out.residual_hz = best.residual_hz;
  const double keep = std::max(best.residual_hz * opt.candidate_factor, 1e-9 * d_hz);
  for (const auto& c : all) {
    if (c.residual_hz <= keep) out.candidates.push_back(c);
  }
  return out;
}

}  // namespace nvsense
