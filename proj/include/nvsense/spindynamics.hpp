#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "nvsense/errors.hpp"

namespace nvsense {

// Hahn-echo timing and AC-field synchronization. The pi pulse sits at
// tau/2; readout_phase_rad is the phase of the final pi/2 pulse measured
// from the first pulse (pi/2 = quadrature operating point).
struct EchoConfig {
  double tau_s = 1e-5;
  double f_ac_hz = 1e5;
  double phase0_rad = 0.0;
  double readout_phase_rad = std::numbers::pi / 2;

  void validate() const {
    if (!(tau_s > 0)) throw ValidationError("EchoConfig: tau_s must be positive");
    if (!(f_ac_hz >= 0)) throw ValidationError("EchoConfig: f_ac_hz must be >= 0");
  }
  // Sequence length equals one AC period (maximal phase pickup).
  bool synchronized() const {
    return f_ac_hz > 0 && std::abs(tau_s * f_ac_hz - 1.0) <= 1e-12;
  }
};

// Bloch vector of the effective two-level system; |0> is +z, so the
// population of |0> is (1 + z) / 2.
struct TwoLevelState {
  Eigen::Vector3d bloch{0.0, 0.0, 1.0};

  static TwoLevelState ground() { return TwoLevelState{}; }
  double p0() const { return 0.5 * (1.0 + bloch.z()); }
  double p1() const { return 0.5 * (1.0 - bloch.z()); }
};

struct DriveConfig {
  double rabi_hz = 2.5e6;
  double detuning_hz = 0.0;
  double pulse_phase_rad = 0.0;
  double duration_s = 0.0;

  void validate() const {
    if (!(rabi_hz >= 0)) throw ValidationError("DriveConfig: rabi_hz must be >= 0");
    if (!(duration_s >= 0)) throw ValidationError("DriveConfig: duration_s must be >= 0");
  }
  double pi_duration_s() const {
    if (!(rabi_hz > 0)) throw ValidationError("DriveConfig: pi pulse needs rabi_hz > 0");
    return 0.5 / rabi_hz;
  }
};

// Phase picked up across a Hahn echo from a parallel AC field
// b(t) = b_parallel * sin(2 pi f_ac t + phase0):
//   phi = 2 pi gamma [ int_0^{tau/2} b dt - int_{tau/2}^{tau} b dt ]
// evaluated in closed form. A zero-frequency field is a DC offset, which the
// echo refocuses exactly, so that branch returns 0 for any amplitude.
inline double accumulated_phase(double b_parallel_t, const EchoConfig& echo,
                                double gamma_hz_per_t) {
  echo.validate();
  if (echo.f_ac_hz == 0.0 || b_parallel_t == 0.0) return 0.0;
  const double omega = 2.0 * std::numbers::pi * echo.f_ac_hz;
  const double a = echo.phase0_rad;
  const double half = 0.5 * omega * echo.tau_s;
  // Each half integrates to a cosine difference; subtracting the halves
  // leaves a second difference of cos around the pi pulse.
  const double second_diff = std::cos(a) - 2.0 * std::cos(a + half) + std::cos(a + 2.0 * half);
  return 2.0 * std::numbers::pi * gamma_hz_per_t * b_parallel_t * second_diff / omega;
}

// Fringe amplitude after decoherence: V = C * exp(-(tau/T2)^p).
inline double echo_visibility(double tau_s, double t2_s, double stretch_p, double contrast_c) {
  if (!(t2_s > 0)) throw ValidationError("echo_visibility: T2 must be positive");
  if (!(stretch_p > 0)) throw ValidationError("echo_visibility: stretch exponent must be positive");
  if (!(contrast_c >= 0) || !(contrast_c <= 1)) {
    throw ValidationError("echo_visibility: contrast must be in [0, 1]");
  }
  if (!(tau_s >= 0)) throw ValidationError("echo_visibility: tau must be >= 0");
  return contrast_c * std::exp(-std::pow(tau_s / t2_s, stretch_p));
}

// Readout convention used throughout: P(|0>) = (1 + V cos(phi - theta)) / 2.
// theta = pi/2 is the linear-response quadrature point; theta -> theta + pi
// flips the sign of the fringe.
inline double echo_population(double phi_rad, double visibility, double readout_phase_rad) {
  if (!(visibility >= 0) || !(visibility <= 1)) {
    throw ValidationError("echo_population: visibility must be in [0, 1]");
  }
  return 0.5 * (1.0 + visibility * std::cos(phi_rad - readout_phase_rad));
}

struct PropagatorOptions {
  double steps_per_cycle = 500.0;   // of the generalized Rabi frequency
  std::uint64_t max_steps = 20000000;
};

namespace detail {

// One RK4 step of dr/dt = omega x r with omega constant over the step.
inline Eigen::Vector3d rk4_step(const Eigen::Vector3d& r, const Eigen::Vector3d& omega,
                                double h) {
  const Eigen::Vector3d k1 = omega.cross(r);
  const Eigen::Vector3d k2 = omega.cross(r + 0.5 * h * k1);
  const Eigen::Vector3d k3 = omega.cross(r + 0.5 * h * k2);
  const Eigen::Vector3d k4 = omega.cross(r + h * k3);
  return r + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Exact rotation of r about unit axis n by angle psi (Rodrigues).
inline Eigen::Vector3d rotate(const Eigen::Vector3d& r, const Eigen::Vector3d& n, double psi) {
  const double c = std::cos(psi), s = std::sin(psi);
  return r * c + n.cross(r) * s + n * (n.dot(r)) * (1.0 - c);
}

}  // namespace detail

// Rotating-frame evolution under H/h = (Delta/2) sigma_z
// + (Omega/2)(cos(phase) sigma_x + sin(phase) sigma_y), i.e. Bloch
// precession dr/dt = omega x r with omega = 2 pi (Omega cos, Omega sin,
// Delta). Fixed-step RK4 with >= steps_per_cycle steps per generalized Rabi
// cycle; norm is preserved to ~1e-11 per pulse at the default step.
inline TwoLevelState propagate_two_level(TwoLevelState state, const DriveConfig& drive,
                                         const PropagatorOptions& opt = {}) {
  drive.validate();
  const double f_eff = std::hypot(drive.rabi_hz, drive.detuning_hz);
  if (drive.duration_s == 0.0 || f_eff == 0.0) return state;
  const double max_h = 1.0 / (opt.steps_per_cycle * f_eff);
  const double steps_needed = std::ceil(drive.duration_s / max_h);
  if (steps_needed > static_cast<double>(opt.max_steps)) {
    throw StepSizeUnderflow("propagate_two_level: pulse needs " +
                            std::to_string(steps_needed) + " steps (max " +
                            std::to_string(opt.max_steps) + ")");
  }
  const auto n_steps = static_cast<std::uint64_t>(steps_needed);
  const double h = drive.duration_s / static_cast<double>(n_steps);
  const Eigen::Vector3d omega =
      2.0 * std::numbers::pi *
      Eigen::Vector3d(drive.rabi_hz * std::cos(drive.pulse_phase_rad),
                      drive.rabi_hz * std::sin(drive.pulse_phase_rad), drive.detuning_hz);
  for (std::uint64_t i = 0; i < n_steps; ++i) {
    state.bloch = detail::rk4_step(state.bloch, omega, h);
  }
  return state;
}

// Idealized zero-duration pulse: exact rotation by `angle` about the
// equatorial axis at `phase` (right-handed).
inline TwoLevelState ideal_pulse(TwoLevelState state, double angle_rad, double phase_rad) {
  const Eigen::Vector3d axis(std::cos(phase_rad), std::sin(phase_rad), 0.0);
  state.bloch = detail::rotate(state.bloch, axis, angle_rad);
  return state;
}

// Analytic Hahn echo for the four axis sub-ensembles. Composes
// accumulated_phase, the shared visibility and echo_population with
// theta_n = readout_phase + (sign_n < 0 ? pi : 0).
inline std::array<double, 4> run_hahn_echo(const std::array<double, 4>& b_parallel_t,
                                           const EchoConfig& echo, double gamma_hz_per_t,
                                           double visibility,
                                           const std::array<int, 4>& signs = {+1, +1, +1, +1}) {
  std::array<double, 4> p{};
  for (std::size_t n = 0; n < 4; ++n) {
    const double phi = accumulated_phase(b_parallel_t[n], echo, gamma_hz_per_t);
    const double theta =
        echo.readout_phase_rad + (signs[n] < 0 ? std::numbers::pi : 0.0);
    p[n] = echo_population(phi, visibility, theta);
  }
  return p;
}

struct NumericEchoOptions {
  // Free-evolution RK4 resolution: steps per AC cycle (and at least
  // min_steps_per_half per half interval).
  double steps_per_cycle = 2000.0;
  std::uint64_t min_steps_per_half = 4000;
  // When set, pulses run through the finite-duration propagator with the AC
  // field entering as time-dependent detuning; otherwise pulses are ideal
  // instantaneous rotations.
  bool finite_pulses = false;
  double rabi_hz = 2.5e6;
};

// Independent numeric oracle for the echo: explicit pi/2 - pi - pi/2
// sequence with the AC field as a time-dependent z rotation,
// omega_z(t) = -2 pi gamma b(t). Returns P(|0>) with unit visibility.
inline double simulate_echo_numeric(double b_parallel_t, const EchoConfig& echo,
                                    double gamma_hz_per_t,
                                    const NumericEchoOptions& opt = {}) {
  echo.validate();
  const double pi = std::numbers::pi;
  auto field_omega_z = [&](double t) {
    return -2.0 * pi * gamma_hz_per_t * b_parallel_t *
           std::sin(2.0 * pi * echo.f_ac_hz * t + echo.phase0_rad);
  };
  // RK4 for dr/dt = omega_z(t) z x r over [t0, t0 + span).
  auto free_evolve = [&](Eigen::Vector3d r, double t0, double span) {
    std::uint64_t n = opt.min_steps_per_half;
    if (echo.f_ac_hz > 0) {
      const double per_cycle = opt.steps_per_cycle * echo.f_ac_hz * span;
      if (per_cycle > static_cast<double>(n)) n = static_cast<std::uint64_t>(std::ceil(per_cycle));
    }
    const double h = span / static_cast<double>(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      const double t = t0 + h * static_cast<double>(i);
      auto deriv = [&](const Eigen::Vector3d& v, double at) {
        return Eigen::Vector3d(-field_omega_z(at) * v.y(), field_omega_z(at) * v.x(), 0.0);
      };
      const Eigen::Vector3d k1 = deriv(r, t);
      const Eigen::Vector3d k2 = deriv(r + 0.5 * h * k1, t + 0.5 * h);
      const Eigen::Vector3d k3 = deriv(r + 0.5 * h * k2, t + 0.5 * h);
      const Eigen::Vector3d k4 = deriv(r + h * k3, t + h);
      r += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return r;
  };

  TwoLevelState s = TwoLevelState::ground();
  if (!opt.finite_pulses) {
    s = ideal_pulse(s, pi / 2, 0.0);
    s.bloch = free_evolve(s.bloch, 0.0, echo.tau_s / 2);
    s = ideal_pulse(s, pi, 0.0);
    s.bloch = free_evolve(s.bloch, echo.tau_s / 2, echo.tau_s / 2);
    s = ideal_pulse(s, pi / 2, echo.readout_phase_rad);
    return s.p0();
  }

  // Finite pulses: constant drive plus the AC detuning, integrated with the
  // same RK4; pulse centers keep the ideal sequence's timing.
  const double d_pi = 0.5 / opt.rabi_hz;
  const double d_half = 0.25 / opt.rabi_hz;
  if (!(echo.tau_s > 2 * d_pi)) {
    throw InvalidTiming("simulate_echo_numeric: tau too short for finite pulses");
  }
  auto driven = [&](Eigen::Vector3d r, double t0, double span, double phase) {
    const double f_eff = std::hypot(opt.rabi_hz, gamma_hz_per_t * std::abs(b_parallel_t));
    auto n = static_cast<std::uint64_t>(std::ceil(span * f_eff * opt.steps_per_cycle));
    n = std::max<std::uint64_t>(n, 64);
    const double h = span / static_cast<double>(n);
    const double wx = 2.0 * pi * opt.rabi_hz * std::cos(phase);
    const double wy = 2.0 * pi * opt.rabi_hz * std::sin(phase);
    for (std::uint64_t i = 0; i < n; ++i) {
      const double t = t0 + h * static_cast<double>(i);
      auto deriv = [&](const Eigen::Vector3d& v, double at) {
        const Eigen::Vector3d w(wx, wy, field_omega_z(at));
        return w.cross(v);
      };
      const Eigen::Vector3d k1 = deriv(r, t);
      const Eigen::Vector3d k2 = deriv(r + 0.5 * h * k1, t + 0.5 * h);
      const Eigen::Vector3d k3 = deriv(r + 0.5 * h * k2, t + 0.5 * h);
      const Eigen::Vector3d k4 = deriv(r + h * k3, t + h);
      r += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return r;
  };
  // Lay the free-evolution clock so the field phase matches the ideal case.
  double t = -d_half;
  s.bloch = driven(s.bloch, t, d_half, 0.0);
  t = 0.0;
  s.bloch = free_evolve(s.bloch, t, echo.tau_s / 2 - d_pi / 2);
  t = echo.tau_s / 2 - d_pi / 2;
  s.bloch = driven(s.bloch, t, d_pi, 0.0);
  t = echo.tau_s / 2 + d_pi / 2;
  s.bloch = free_evolve(s.bloch, t, echo.tau_s / 2 - d_pi / 2);
  t = echo.tau_s;
  s.bloch = driven(s.bloch, t, d_half, echo.readout_phase_rad);
  return s.p0();
}

}  // namespace nvsense
