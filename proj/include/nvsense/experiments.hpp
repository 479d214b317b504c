#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvsense/ensemble.hpp"
#include "nvsense/errors.hpp"
#include "nvsense/fit.hpp"
#include "nvsense/geometry.hpp"
#include "nvsense/rng.hpp"
#include "nvsense/sequence.hpp"
#include "nvsense/spindynamics.hpp"

namespace nvsense {

struct SweepMetadata {
  std::string mode;    // e.g. "multi_frequency(z)", "single_frequency(NV1)", "odmr"
  std::string x_name;  // column name of the independent variable
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct SweepResult {
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> sigma;           // predicted shot noise per point (0 = noiseless)
  std::vector<std::uint64_t> counts;   // total photons per point (0 = noiseless)
  SweepMetadata meta;
  // Central linear response, filled by echo_amplitude_sweep.
  double gradient = 0.0;
  double gradient_sigma = 0.0;

  // Grid strictly ascending, signals within the physical band plus noise.
  void check_invariants(const EnsembleConfig& cfg) const {
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
      if (!(x[i] < x[i + 1])) throw ValidationError("SweepResult: grid must be strictly ascending");
    }
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double slack = 5.0 * sigma[i];
      if (mean[i] < 1.0 - cfg.contrast - slack - 1e-12 || mean[i] > 1.0 + slack + 1e-12) {
        throw ValidationError("SweepResult: signal outside the physical band");
      }
    }
  }
};

// Ascending amplitude grid symmetric about zero (always contains 0).
inline std::vector<double> symmetric_amplitude_grid(double max_t, int points) {
  if (!(max_t > 0) || points < 5) {
    throw ValidationError("symmetric_amplitude_grid: need max > 0 and >= 5 points");
  }
  if (points % 2 == 0) ++points;
  std::vector<double> grid(static_cast<std::size_t>(points));
  const int half = points / 2;
  for (int i = 0; i < points; ++i) {
    grid[static_cast<std::size_t>(i)] = max_t * static_cast<double>(i - half) / half;
  }
  grid[static_cast<std::size_t>(half)] = 0.0;
  return grid;
}

// ---------------------------------------------------------------------------
// ODMR

struct OdmrOptions {
  double linewidth_hwhm_hz = 3e6;
  double depth_scale = 1.0;  // per-line dip depth = rho_n * contrast * depth_scale
  std::uint64_t shots_per_point = 0;  // 0 = noiseless
  std::uint64_t seed = 0;
};

// CW spectrum: unit baseline minus one Lorentzian per resonance, eight in
// total (two Zeeman branches per axis), dip depth proportional to rho_n * C.
inline SweepResult simulate_odmr(const EnsembleConfig& cfg, const Eigen::Vector3d& b_static_t,
                                 const std::vector<double>& freq_grid_hz,
                                 const OdmrOptions& opt = {}, int threads = 1) {
  cfg.validate();
  if (freq_grid_hz.size() < 8) throw ValidationError("simulate_odmr: grid too small");
  const auto lines = resonance_frequencies(b_static_t, cfg.d_hz, cfg.gamma_hz_per_t);
  double lo = lines[0].first, hi = lines[0].second;
  for (const auto& [l, u] : lines) {
    lo = std::min(lo, l);
    hi = std::max(hi, u);
  }
  if (freq_grid_hz.front() > lo || freq_grid_hz.back() < hi) {
    throw ValidationError("simulate_odmr: grid must span all eight resonances");
  }

  SweepResult out;
  out.x = freq_grid_hz;
  out.mean.resize(out.x.size());
  out.sigma.assign(out.x.size(), 0.0);
  out.counts.assign(out.x.size(), 0);
  out.meta.mode = "odmr";
  out.meta.x_name = "frequency_hz";
  out.meta.seed = opt.seed;
  const double w2 = opt.linewidth_hwhm_hz * opt.linewidth_hwhm_hz;
  parallel_for(out.x.size(), threads, [&](std::size_t i) {
    const double f = out.x[i];
    double s = 1.0;
    for (std::size_t n = 0; n < 4; ++n) {
      const double depth = cfg.ratios[n] * cfg.contrast * opt.depth_scale;
      for (const double c : {lines[n].first, lines[n].second}) {
        s -= depth * w2 / ((f - c) * (f - c) + w2);
      }
    }
    if (opt.shots_per_point > 0) {
      const auto sample = sample_readout(
          s, cfg, opt.shots_per_point, derive_seed(opt.seed, rng_stream::kOdmr, i));
      out.mean[i] = sample.estimate;
      out.sigma[i] = predicted_readout_sigma(s, cfg, opt.shots_per_point);
      out.counts[i] = sample.counts;
    } else {
      out.mean[i] = s;
    }
  });
  return out;
}

struct OdmrFit {
  std::array<double, 8> centers_hz{};  // ascending
  std::array<double, 8> depths{};
  double width_hwhm_hz = 0.0;
  double baseline = 0.0;
  double rms_residual = 0.0;
};

// Eight-Lorentzian comb fit (shared width, common baseline), initialized
// from the deepest local minima of the spectrum. Requires all eight dips to
// be resolvable on the grid.
inline OdmrFit fit_odmr(const SweepResult& sweep, double init_width_hwhm_hz,
                        const FitOptions& fit_opt = {}) {
  const auto& x = sweep.x;
  const auto& y = sweep.mean;
  if (x.size() < 32) throw ValidationError("fit_odmr: grid too small");

  double baseline = y.front();
  for (double v : y) baseline = std::max(baseline, v);
  struct Dip {
    double x, depth;
  };
  std::vector<Dip> dips;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (y[i] < y[i - 1] && y[i] <= y[i + 1]) dips.push_back({x[i], baseline - y[i]});
  }
  std::sort(dips.begin(), dips.end(), [](const Dip& a, const Dip& b) { return a.depth > b.depth; });
  // Greedy pick with a separation floor so shot noise inside one deep dip
  // cannot seed the fit with duplicated centers.
  std::vector<Dip> picked;
  for (const Dip& d : dips) {
    bool close = false;
    for (const Dip& q : picked) {
      if (std::abs(d.x - q.x) < 2.0 * init_width_hwhm_hz) {
        close = true;
        break;
      }
    }
    if (!close) picked.push_back(d);
    if (picked.size() == 8) break;
  }
  if (picked.size() < 8) {
    throw FitDiverged("fit_odmr: found only " + std::to_string(picked.size()) +
                      " separated candidate dips, need 8");
  }
  dips = std::move(picked);
  std::sort(dips.begin(), dips.end(), [](const Dip& a, const Dip& b) { return a.x < b.x; });

  // Parameters: [baseline, width, depth_0..7, center_0..7].
  Eigen::VectorXd p(18);
  p[0] = baseline;
  p[1] = init_width_hwhm_hz;
  for (int d = 0; d < 8; ++d) {
    p[2 + d] = dips[static_cast<std::size_t>(d)].depth;
    p[10 + d] = dips[static_cast<std::size_t>(d)].x;
  }
  auto model = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
    const double w2 = q[1] * q[1];
    for (std::size_t i = 0; i < x.size(); ++i) {
      double s = q[0];
      for (int d = 0; d < 8; ++d) {
        const double dx = x[i] - q[10 + d];
        s -= q[2 + d] * w2 / (dx * dx + w2);
      }
      r[static_cast<Eigen::Index>(i)] = s - y[i];
    }
  };
  const FitResult fit = levenberg_marquardt(model, p, x.size(), fit_opt);

  OdmrFit out;
  out.baseline = fit.params[0];
  out.width_hwhm_hz = std::abs(fit.params[1]);
  out.rms_residual = fit.rms_residual;
  std::array<int, 8> order{};
  for (int d = 0; d < 8; ++d) order[static_cast<std::size_t>(d)] = d;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return fit.params[10 + a] < fit.params[10 + b]; });
  for (int d = 0; d < 8; ++d) {
    out.centers_hz[static_cast<std::size_t>(d)] = fit.params[10 + order[static_cast<std::size_t>(d)]];
    out.depths[static_cast<std::size_t>(d)] = fit.params[2 + order[static_cast<std::size_t>(d)]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rabi

struct RabiOptions {
  std::uint64_t shots_per_point = 0;
  std::uint64_t seed = 0;
  double residual_threshold = 0.05;  // rms, on the normalized signal
};

struct RabiResult {
  std::array<SweepResult, 4> curves;       // one per axis, NV1..NV4
  std::array<double, 4> fitted_ratios{};   // normalized to sum 1
  std::array<double, 4> fitted_rabi_hz{};
  double max_rms_residual = 0.0;
};

// Resonant Rabi oscillation of each axis sub-ensemble in turn; the other
// axes stay bright, so each curve oscillates with amplitude C * rho_n. The
// per-axis cosine fits recover the orientation ratios.
inline RabiResult simulate_rabi(const EnsembleConfig& cfg,
                                const std::vector<double>& duration_grid_s, double rabi_hz,
                                const RabiOptions& opt = {}, int threads = 1) {
  cfg.validate();
  if (!(rabi_hz > 0)) throw ValidationError("simulate_rabi: rabi_hz must be positive");
  if (duration_grid_s.empty() || duration_grid_s.back() < 3.0 / rabi_hz) {
    throw ValidationError("simulate_rabi: grid must cover at least 3 Rabi periods");
  }

  RabiResult out;
  const std::size_t npts = duration_grid_s.size();
  for (std::size_t axis = 0; axis < 4; ++axis) {
    SweepResult& sweep = out.curves[axis];
    sweep.x = duration_grid_s;
    sweep.mean.resize(npts);
    sweep.sigma.assign(npts, 0.0);
    sweep.counts.assign(npts, 0);
    sweep.meta.mode = "rabi(NV" + std::to_string(axis + 1) + ")";
    sweep.meta.x_name = "duration_s";
    sweep.meta.seed = opt.seed;
    parallel_for(npts, threads, [&](std::size_t i) {
      const double t = duration_grid_s[i];
      const double p0 = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * rabi_hz * t));
      const double s =
          ensemble_signal(single_frequency_populations(static_cast<int>(axis) + 1, p0), cfg);
      if (opt.shots_per_point > 0) {
        const auto sample =
            sample_readout(s, cfg, opt.shots_per_point,
                           derive_seed(opt.seed, rng_stream::kRabi, axis * npts + i));
        sweep.mean[i] = sample.estimate;
        sweep.sigma[i] = predicted_readout_sigma(s, cfg, opt.shots_per_point);
        sweep.counts[i] = sample.counts;
      } else {
        sweep.mean[i] = s;
      }
    });

    // Fit S(t) = a - (b/2)(1 - cos(2 pi f t)); b = C * rho_n.
    Eigen::VectorXd p(3);
    double lo = sweep.mean[0], hi = sweep.mean[0];
    for (double v : sweep.mean) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    p << hi, hi - lo, rabi_hz;
    auto model = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
      for (std::size_t i = 0; i < npts; ++i) {
        const double c = std::cos(2.0 * std::numbers::pi * q[2] * duration_grid_s[i]);
        r[static_cast<Eigen::Index>(i)] = q[0] - 0.5 * q[1] * (1.0 - c) - sweep.mean[i];
      }
    };
    const FitResult fit = levenberg_marquardt(model, p, npts);
    if (fit.rms_residual > opt.residual_threshold) {
      throw FitDiverged("simulate_rabi: rms residual " + std::to_string(fit.rms_residual) +
                        " exceeds threshold on axis NV" + std::to_string(axis + 1));
    }
    out.fitted_ratios[axis] = std::abs(fit.params[1]);
    out.fitted_rabi_hz[axis] = std::abs(fit.params[2]);
    out.max_rms_residual = std::max(out.max_rms_residual, fit.rms_residual);
  }
  double total = 0;
  for (double b : out.fitted_ratios) total += b;
  if (!(total > 0)) throw FitDiverged("simulate_rabi: degenerate amplitudes");
  for (double& b : out.fitted_ratios) b /= total;
  return out;
}

// ---------------------------------------------------------------------------
// Echo amplitude sweep

struct EchoSweepOptions {
  std::uint64_t shots_per_point = 0;  // 0 = noiseless
  std::uint64_t seed = 0;
  double window_fraction = 0.2;  // central part of the range used for the gradient
};

namespace detail {

// Populations of the four axes for one applied amplitude along `dir_unit`:
// driven axes run the analytic echo, undriven axes stay bright.
inline std::array<double, 4> echo_populations(const EnsembleConfig& cfg, const EchoConfig& echo,
                                              double visibility,
                                              const std::array<bool, 4>& active,
                                              const std::array<int, 4>& signs,
                                              const Eigen::Vector3d& dir_unit, double amplitude_t) {
  const AxisSet u = axis_unit_vectors();
  std::array<double, 4> b_par{};
  for (std::size_t n = 0; n < 4; ++n) {
    b_par[n] = active[n] ? amplitude_t * u.axes[n].dot(dir_unit) : 0.0;
  }
  std::array<double, 4> p = run_hahn_echo(b_par, echo, cfg.gamma_hz_per_t, visibility, signs);
  for (std::size_t n = 0; n < 4; ++n) {
    if (!active[n]) p[n] = 1.0;
  }
  return p;
}

inline Eigen::Vector3d normalized_direction(const Eigen::Vector3d& direction) {
  const double norm = direction.norm();
  if (!(norm > 0)) throw ValidationError("field direction must be nonzero");
  return direction / norm;
}

}  // namespace detail

// Signal versus applied AC amplitude along a fixed direction, for the axes
// and readout signs selected by the sequence program. The returned gradient
// is a straight-line fit over the central window_fraction of the swept
// range (weighted by shot noise when sampling is on).
inline SweepResult echo_amplitude_sweep(const EnsembleConfig& cfg, const EchoConfig& echo,
                                        const SequenceProgram& program,
                                        const ChannelAssignment& channels,
                                        const Eigen::Vector3d& direction,
                                        const std::vector<double>& amplitude_grid_t,
                                        const EchoSweepOptions& opt = {}, int threads = 1) {
  cfg.validate();
  echo.validate();
  program.validate(channels);
  const Eigen::Vector3d dir = detail::normalized_direction(direction);
  bool has_zero = false;
  for (std::size_t i = 0; i < amplitude_grid_t.size(); ++i) {
    if (amplitude_grid_t[i] == 0.0) has_zero = true;
    if (i > 0 && !(amplitude_grid_t[i] > amplitude_grid_t[i - 1])) {
      throw ValidationError("echo_amplitude_sweep: grid must be strictly ascending");
    }
  }
  if (!has_zero) throw ValidationError("echo_amplitude_sweep: amplitude grid must include 0");

  const double vis = echo_visibility(echo.tau_s, cfg.t2_s, cfg.stretch, cfg.contrast);
  const std::array<int, 4> signs = program.readout_signs(channels);
  std::array<bool, 4> active{};
  for (int axis : program.active_axes(channels)) active[static_cast<std::size_t>(axis - 1)] = true;

  SweepResult out;
  out.x = amplitude_grid_t;
  out.mean.resize(out.x.size());
  out.sigma.assign(out.x.size(), 0.0);
  out.counts.assign(out.x.size(), 0);
  out.meta.mode = mode_name(program.mode);
  out.meta.x_name = "amplitude_t";
  out.meta.seed = opt.seed;
  parallel_for(out.x.size(), threads, [&](std::size_t i) {
    const auto p = detail::echo_populations(cfg, echo, vis, active, signs, dir, out.x[i]);
    const double s = ensemble_signal(p, cfg);
    if (opt.shots_per_point > 0) {
      const auto sample = sample_readout(s, cfg, opt.shots_per_point,
                                         derive_seed(opt.seed, rng_stream::kSweep, i));
      out.mean[i] = sample.estimate;
      out.sigma[i] = predicted_readout_sigma(s, cfg, opt.shots_per_point);
      out.counts[i] = sample.counts;
    } else {
      out.mean[i] = s;
    }
  });

  // Central gradient: symmetric window around zero amplitude.
  const double span = out.x.back() - out.x.front();
  double half = 0.5 * opt.window_fraction * span;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < out.x.size(); ++i) {
    if (std::abs(out.x[i]) <= half) idx.push_back(i);
  }
  if (idx.size() < 3) {
    // Too coarse a grid for the requested window: take the 3 points nearest 0.
    std::vector<std::size_t> all(out.x.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(out.x[a]) < std::abs(out.x[b]);
    });
    all.resize(3);
    std::sort(all.begin(), all.end());
    idx = all;
  }
  std::vector<double> fx, fy, fw;
  for (std::size_t i : idx) {
    fx.push_back(out.x[i]);
    fy.push_back(out.mean[i]);
    if (opt.shots_per_point > 0) fw.push_back(1.0 / (out.sigma[i] * out.sigma[i]));
  }
  const LinearFit line = linear_fit(fx, fy, fw);
  out.gradient = line.slope;
  out.gradient_sigma = line.slope_sigma;
  return out;
}

// ---------------------------------------------------------------------------
// Sensitivity

enum class Scheme { single, multi, both };

struct SensitivityOptions {
  Scheme scheme = Scheme::both;
  // Axis pair used for each conventional component estimate (x, y, z). The
  // first axis of each pair is measured with flipped readout so the pair
  // difference gradients add.
  std::array<std::array<int, 2>, 3> pairs = {{{1, 3}, {1, 2}, {1, 4}}};
  double shots_per_second = 5e4;
  double sweep_time_per_point_s = 10.0;  // 0 = noiseless sweeps
  long long mc_reps = 0;                 // Monte Carlo noise verification
  std::uint64_t seed = 0;
  double amplitude_max_t = 2.5e-7;
  int amplitude_points = 21;
  double rabi_hz = 2.5e6;
  double zero_gradient_rel = 1e-9;  // relative to the fringe scale kappa
};

struct SensitivityEntry {
  double value_t_per_sqrt_hz = 0.0;
  double sigma_t_per_sqrt_hz = 0.0;
};

struct SensitivityReport {
  // delta-B per axis for the configured field direction.
  std::array<SensitivityEntry, 4> per_axis{};
  // Conventional (two-axis pair) and multi-frequency per Cartesian component.
  std::array<SensitivityEntry, 3> conventional{};
  std::array<SensitivityEntry, 3> multi{};
  // Best multi-frequency pattern for the configured direction.
  SensitivityEntry multi_best{};
  Component multi_best_component = Component::z;
  std::array<double, 3> improvement{};          // conventional / multi, per component
  std::array<double, 3> ideal_gradient_ratio{}; // from exact gradients alone
  std::array<double, 3> mc_ratio{};             // Monte Carlo delta-P version (mc_reps > 0)
  double kappa_per_t = 0.0;                     // fringe slope scale C*(V/2)*Phi'
  std::vector<SweepResult> sweeps;              // the underlying sweep curves
};

namespace detail {

inline double baseline_single(const EnsembleConfig& cfg, int axis) {
  return 1.0 - 0.5 * cfg.contrast * cfg.ratios[static_cast<std::size_t>(axis - 1)];
}

inline double baseline_multi(const EnsembleConfig& cfg) { return 1.0 - 0.5 * cfg.contrast; }

}  // namespace detail

// Shot-noise-limited sensitivities for both schemes, normalized to a
// 1-second measurement. Gradients come from echo amplitude sweeps (noisy
// when sweep_time_per_point_s > 0); delta-P values are the analytic Poisson
// noise of a 1-second readout at the operating baseline, optionally
// cross-checked by Monte Carlo (mc_reps). The conventional per-component
// accounting follows the two-axis difference with its sqrt(2) measurement
// time doubling, so the equal-ratio ideal ratio to the multi-frequency
// scheme is exactly 4.
inline SensitivityReport compute_sensitivity(const EnsembleConfig& cfg, const EchoConfig& echo,
                                             const Eigen::Vector3d& direction,
                                             const SensitivityOptions& opt = {},
                                             int threads = 1) {
  cfg.validate();
  echo.validate();
  const Eigen::Vector3d dir = detail::normalized_direction(direction);
  if (!(opt.shots_per_second > 0)) {
    throw ValidationError("compute_sensitivity: shots_per_second must be positive");
  }
  const AxisSet u = axis_unit_vectors();
  const double vis = echo_visibility(echo.tau_s, cfg.t2_s, cfg.stretch, cfg.contrast);
  const double phi_per_t = accumulated_phase(1.0, echo, cfg.gamma_hz_per_t);
  const double kappa = cfg.contrast * 0.5 * vis * phi_per_t;
  if (!(std::abs(kappa) > 0)) {
    throw ZeroGradient("compute_sensitivity: echo has no linear response (kappa = 0)");
  }
  const auto shots_1s = static_cast<std::uint64_t>(std::llround(opt.shots_per_second));
  const double gradient_floor = opt.zero_gradient_rel * std::abs(kappa);

  const std::vector<double> grid =
      symmetric_amplitude_grid(opt.amplitude_max_t, opt.amplitude_points);
  const ChannelAssignment channels = [&] {
    ChannelAssignment a;
    // Carriers only matter for their pairwise margin here; space them evenly.
    for (std::size_t c = 0; c < 4; ++c) a.carrier_hz[c] = 2.8e9 + 5e7 * static_cast<double>(c);
    return a;
  }();

  DriveConfig drive;
  drive.rabi_hz = opt.rabi_hz;
  EchoSweepOptions sweep_opt;
  sweep_opt.shots_per_point =
      opt.sweep_time_per_point_s > 0
          ? static_cast<std::uint64_t>(
                std::max(1.0, std::round(opt.sweep_time_per_point_s * opt.shots_per_second)))
          : 0;

  SensitivityReport report;
  report.kappa_per_t = kappa;
  std::uint64_t ordinal = 0;
  auto run_sweep = [&](const SequenceMode& mode, const Eigen::Vector3d& along,
                       const std::string& tag) -> const SweepResult& {
    const SequenceProgram program = build_echo_sequence(mode, echo.tau_s, drive, channels);
    EchoSweepOptions o = sweep_opt;
    o.seed = derive_seed(opt.seed, rng_stream::kSensitivity, ordinal++);
    SweepResult sweep =
        echo_amplitude_sweep(cfg, echo, program, channels, along, grid, o, threads);
    sweep.meta.mode += tag;
    report.sweeps.push_back(std::move(sweep));
    return report.sweeps.back();
  };

  const Eigen::Matrix3d eye = Eigen::Matrix3d::Identity();
  const bool want_single = opt.scheme != Scheme::multi;
  const bool want_multi = opt.scheme != Scheme::single;

  if (want_single) {
    // Per-axis delta-B for the configured direction.
    for (int axis = 1; axis <= 4; ++axis) {
      const SweepResult& sweep = run_sweep(SingleFrequencyMode{axis}, dir, "");
      const double g = std::abs(sweep.gradient);
      if (g < gradient_floor) {
        throw ZeroGradient("compute_sensitivity: axis NV" + std::to_string(axis) +
                           " has no response for the configured field direction");
      }
      const double dp = predicted_readout_sigma(detail::baseline_single(cfg, axis), cfg, shots_1s);
      report.per_axis[static_cast<std::size_t>(axis - 1)] = {
          dp / g, dp / g * (sweep.gradient_sigma / g)};
    }
    // Conventional per-component pairs, swept along the Cartesian axes.
    for (int k = 0; k < 3; ++k) {
      const auto [a, b] = opt.pairs[static_cast<std::size_t>(k)];
      const std::string tag = std::string(" pair_") + component_name(static_cast<Component>(k));
      const SweepResult& sa = run_sweep(SingleFrequencyMode{a}, eye.col(k), tag);
      const SweepResult& sb = run_sweep(SingleFrequencyMode{b}, eye.col(k), tag);
      const double g = std::abs(sa.gradient) + std::abs(sb.gradient);
      if (g < gradient_floor) {
        throw ZeroGradient(std::string("compute_sensitivity: conventional ") +
                           component_name(static_cast<Component>(k)) +
                           " pair has no response");
      }
      const double dpa = predicted_readout_sigma(detail::baseline_single(cfg, a), cfg, shots_1s);
      const double dpb = predicted_readout_sigma(detail::baseline_single(cfg, b), cfg, shots_1s);
      const double sg = std::hypot(sa.gradient_sigma, sb.gradient_sigma);
      const double value = std::numbers::sqrt2 * std::hypot(dpa, dpb) / g;
      report.conventional[static_cast<std::size_t>(k)] = {value, value * sg / g};
    }
  }

  if (want_multi) {
    const double dp_multi = predicted_readout_sigma(detail::baseline_multi(cfg), cfg, shots_1s);
    for (int k = 0; k < 3; ++k) {
      const SweepResult& sweep =
          run_sweep(MultiFrequencyMode{static_cast<Component>(k)}, eye.col(k), "");
      const double g = std::abs(sweep.gradient);
      if (g < gradient_floor) {
        throw ZeroGradient(std::string("compute_sensitivity: multi-frequency ") +
                           component_name(static_cast<Component>(k)) + " has no response");
      }
      const double value = dp_multi / g;
      report.multi[static_cast<std::size_t>(k)] = {value, value * sweep.gradient_sigma / g};
    }
    // Best pattern for the configured direction.
    double best_g = 0, best_sigma = 0;
    for (int k = 0; k < 3; ++k) {
      const SweepResult& sweep = run_sweep(MultiFrequencyMode{static_cast<Component>(k)}, dir,
                                           " along_direction");
      if (std::abs(sweep.gradient) > best_g) {
        best_g = std::abs(sweep.gradient);
        best_sigma = sweep.gradient_sigma;
        report.multi_best_component = static_cast<Component>(k);
      }
    }
    if (best_g < gradient_floor) {
      throw ZeroGradient("compute_sensitivity: no multi-frequency pattern responds to the "
                         "configured field direction");
    }
    report.multi_best = {dp_multi / best_g, dp_multi / best_g * (best_sigma / best_g)};
  }

  // Exact-gradient bookkeeping (independent of the fitted sweeps): the
  // multi-frequency component gradient is kappa/sqrt(3) for any ratios; the
  // conventional pair gradient is kappa * (rho_a u_ak + rho_b u_bk).
  for (int k = 0; k < 3; ++k) {
    const auto [a, b] = opt.pairs[static_cast<std::size_t>(k)];
    const SignPattern pattern = sign_pattern(static_cast<Component>(k));
    double g_multi = 0;
    for (std::size_t n = 0; n < 4; ++n) {
      g_multi += cfg.ratios[n] * pattern.signs[n] * u.axes[n][k];
    }
    const double g_pair = cfg.ratios[static_cast<std::size_t>(a - 1)] * u.axes[a - 1][k] +
                          cfg.ratios[static_cast<std::size_t>(b - 1)] * u.axes[b - 1][k];
    if (!(std::abs(g_pair) > 0)) {
      throw ZeroGradient("compute_sensitivity: degenerate conventional pair geometry");
    }
    report.ideal_gradient_ratio[static_cast<std::size_t>(k)] =
        2.0 * std::abs(g_multi) / std::abs(g_pair);
    if (want_single && want_multi) {
      report.improvement[static_cast<std::size_t>(k)] =
          report.conventional[static_cast<std::size_t>(k)].value_t_per_sqrt_hz /
          report.multi[static_cast<std::size_t>(k)].value_t_per_sqrt_hz;
    }
  }

  // Monte Carlo verification of the noise model: empirical delta-P at the
  // operating baselines, recombined with the exact gradients.
  if (opt.mc_reps > 0 && want_single && want_multi) {
    const auto reps = static_cast<std::size_t>(opt.mc_reps);
    std::array<double, 5> baselines{};
    for (int axis = 1; axis <= 4; ++axis) {
      baselines[static_cast<std::size_t>(axis - 1)] = detail::baseline_single(cfg, axis);
    }
    baselines[4] = detail::baseline_multi(cfg);
    std::array<double, 5> mc_dp{};
    std::vector<double> draws(reps);
    for (std::size_t m = 0; m < 5; ++m) {
      parallel_for(reps, threads, [&](std::size_t i) {
        draws[i] = sample_readout(baselines[m], cfg, shots_1s,
                                  derive_seed(opt.seed, rng_stream::kSensitivity,
                                              1000 + m * reps + i))
                       .estimate;
      });
      double mean = 0;
      for (double d : draws) mean += d;
      mean /= static_cast<double>(reps);
      double ss = 0;
      for (double d : draws) ss += (d - mean) * (d - mean);
      mc_dp[m] = std::sqrt(ss / static_cast<double>(reps - 1));
    }
    for (int k = 0; k < 3; ++k) {
      const auto [a, b] = opt.pairs[static_cast<std::size_t>(k)];
      const SignPattern pattern = sign_pattern(static_cast<Component>(k));
      double g_multi = 0;
      for (std::size_t n = 0; n < 4; ++n) {
        g_multi += cfg.ratios[n] * pattern.signs[n] * u.axes[n][k];
      }
      g_multi = std::abs(kappa * g_multi);
      const double g_pair =
          std::abs(kappa * (cfg.ratios[static_cast<std::size_t>(a - 1)] * u.axes[a - 1][k] +
                            cfg.ratios[static_cast<std::size_t>(b - 1)] * u.axes[b - 1][k]));
      const double conv = std::numbers::sqrt2 *
                          std::hypot(mc_dp[static_cast<std::size_t>(a - 1)],
                                     mc_dp[static_cast<std::size_t>(b - 1)]) /
                          g_pair;
      const double multi = mc_dp[4] / g_multi;
      report.mc_ratio[static_cast<std::size_t>(k)] = conv / multi;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Vector estimation

enum class VectorScheme { conventional, multi_frequency };

struct VectorOptions {
  std::vector<double> fractions = {0.25, 0.5, 0.75, 1.0};  // of the true amplitude
  double time_per_curve_s = 0.0;  // 0 = noiseless
  double shots_per_second = 5e4;
  std::uint64_t seed = 0;
  double rabi_hz = 2.5e6;
  double ambiguous_sigma_factor = 3.0;
  double max_phase_rad = 0.3;  // linear-response window guard
};

struct VectorEstimate {
  VectorScheme scheme = VectorScheme::multi_frequency;
  Eigen::Vector3d b_t = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::Zero();  // unit
  double amplitude_t = 0.0;
  Eigen::Matrix3d covariance_t2 = Eigen::Matrix3d::Zero();
  std::array<double, 4> axis_projections_t{};   // conventional raw output
  std::array<double, 3> component_responses{};  // multi-frequency raw output
};

inline double angle_between_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double cross = a.cross(b).norm();
  const double dot = a.dot(b);
  return std::atan2(cross, dot) * 180.0 / std::numbers::pi;
}

// Linear response matrix of the multi-frequency scheme: component k versus
// field component j. Diagonal is kappa/sqrt(3) for any ratios; off-diagonal
// leakage vanishes for equal ratios.
inline Eigen::Matrix3d mf_response_matrix(const EnsembleConfig& cfg, const EchoConfig& echo) {
  const AxisSet u = axis_unit_vectors();
  const double vis = echo_visibility(echo.tau_s, cfg.t2_s, cfg.stretch, cfg.contrast);
  const double phi_per_t = accumulated_phase(1.0, echo, cfg.gamma_hz_per_t);
  const double kappa = cfg.contrast * 0.5 * vis * phi_per_t;
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (int k = 0; k < 3; ++k) {
    const SignPattern pattern = sign_pattern(static_cast<Component>(k));
    for (std::size_t n = 0; n < 4; ++n) {
      m.row(k) += kappa * cfg.ratios[n] * pattern.signs[n] * u.axes[n].transpose();
    }
  }
  return m;
}

// Full vector reconstruction. The conventional scheme sweeps each axis
// alone and inverts the over-determined projection system by least squares;
// the multi-frequency scheme runs the three component programs and solves
// the full forward model (linear seed + Gauss-Newton refinement), which
// keeps unequal-ratio leakage out of the estimate. Both use the known
// gamma, tau and visibility from the config as the amplitude calibration.
inline VectorEstimate estimate_vector(const EnsembleConfig& cfg, const EchoConfig& echo,
                                      const Eigen::Vector3d& true_b_t, VectorScheme scheme,
                                      const VectorOptions& opt = {}, int threads = 1) {
  cfg.validate();
  echo.validate();
  if (opt.fractions.empty()) throw ValidationError("estimate_vector: fractions must be non-empty");
  for (std::size_t i = 0; i < opt.fractions.size(); ++i) {
    if (!(opt.fractions[i] > 0) || opt.fractions[i] > 1.0 ||
        (i > 0 && opt.fractions[i] <= opt.fractions[i - 1])) {
      throw ValidationError("estimate_vector: fractions must be ascending in (0, 1]");
    }
  }
  const AxisSet u = axis_unit_vectors();
  const double vis = echo_visibility(echo.tau_s, cfg.t2_s, cfg.stretch, cfg.contrast);
  const double phi_per_t = accumulated_phase(1.0, echo, cfg.gamma_hz_per_t);
  double max_phase = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    max_phase = std::max(max_phase, std::abs(phi_per_t * u.axes[n].dot(true_b_t)));
  }
  if (max_phase >= opt.max_phase_rad) {
    throw ValidationError("estimate_vector: field amplitude outside the linear window");
  }

  const bool noisy = opt.time_per_curve_s > 0;
  const std::uint64_t shots_pp =
      noisy ? static_cast<std::uint64_t>(std::max(
                  1.0, std::round(opt.time_per_curve_s * opt.shots_per_second /
                                  static_cast<double>(opt.fractions.size()))))
            : 0;

  ChannelAssignment channels;
  for (std::size_t c = 0; c < 4; ++c) channels.carrier_hz[c] = 2.8e9 + 5e7 * static_cast<double>(c);
  DriveConfig drive;
  drive.rabi_hz = opt.rabi_hz;

  // One measured point: signal for the program's axes/signs at the scaled
  // true field, Poisson-sampled when a time budget is given.
  auto measure = [&](const SequenceProgram& program, double fraction, std::uint64_t index,
                     double& sigma_out) {
    const std::array<int, 4> signs = program.readout_signs(channels);
    std::array<bool, 4> active{};
    for (int axis : program.active_axes(channels)) {
      active[static_cast<std::size_t>(axis - 1)] = true;
    }
    const Eigen::Vector3d b = fraction * true_b_t;
    const double bnorm = b.norm();
    const Eigen::Vector3d dir = bnorm > 0 ? Eigen::Vector3d(b / bnorm) : Eigen::Vector3d(1, 0, 0);
    const auto p = detail::echo_populations(cfg, echo, vis, active, signs, dir, bnorm);
    const double s = ensemble_signal(p, cfg);
    if (!noisy) {
      sigma_out = 0.0;
      return s;
    }
    sigma_out = predicted_readout_sigma(s, cfg, shots_pp);
    return sample_readout(s, cfg, shots_pp, derive_seed(opt.seed, rng_stream::kVector, index))
        .estimate;
  };

  VectorEstimate out;
  out.scheme = scheme;
  const std::size_t nf = opt.fractions.size();

  if (scheme == VectorScheme::conventional) {
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int axis = 1; axis <= 4; ++axis) {
      const SequenceProgram program =
          build_echo_sequence(SingleFrequencyMode{axis}, echo.tau_s, drive, channels);
      const double fringe = 0.5 * cfg.contrast * cfg.ratios[static_cast<std::size_t>(axis - 1)] * vis;
      const double base = detail::baseline_single(cfg, axis);
      double wsum = 0, psum = 0;
      for (std::size_t i = 0; i < nf; ++i) {
        double sigma_s = 0;
        const double s = measure(program, opt.fractions[i],
                                 static_cast<std::uint64_t>(axis - 1) * nf + i, sigma_s);
        double val = (s - base) / fringe;
        val = std::clamp(val, -1.0 + 1e-12, 1.0 - 1e-12);
        const double phi = std::asin(val);
        const double proj = phi / (phi_per_t * opt.fractions[i]);
        // Propagate the per-point shot noise through the inversion chain.
        const double slope = fringe * std::cos(phi) * phi_per_t * opt.fractions[i];
        const double w = noisy ? (slope * slope) / (sigma_s * sigma_s) : 1.0;
        psum += w * proj;
        wsum += w;
      }
      const double proj_hat = psum / wsum;
      out.axis_projections_t[static_cast<std::size_t>(axis - 1)] = proj_hat;
      acc += proj_hat * u.axes[static_cast<std::size_t>(axis - 1)];
      if (noisy) {
        cov += (1.0 / wsum) * u.axes[static_cast<std::size_t>(axis - 1)] *
               u.axes[static_cast<std::size_t>(axis - 1)].transpose();
      }
    }
    out.b_t = 0.75 * acc;
    out.covariance_t2 = (0.75 * 0.75) * cov;
  } else {
    // Measure the three component curves.
    Eigen::MatrixXd meas(3, nf), sig(3, nf);
    for (int k = 0; k < 3; ++k) {
      const SequenceProgram program = build_echo_sequence(
          MultiFrequencyMode{static_cast<Component>(k)}, echo.tau_s, drive, channels);
      for (std::size_t i = 0; i < nf; ++i) {
        double sigma_s = 0;
        meas(k, static_cast<Eigen::Index>(i)) =
            measure(program, opt.fractions[i],
                    1000 + static_cast<std::uint64_t>(k) * nf + i, sigma_s);
        sig(k, static_cast<Eigen::Index>(i)) = noisy ? sigma_s : 1.0;
      }
    }
    const double base = detail::baseline_multi(cfg);
    // Linear seed: response_k = x * (M B)_k in the small-phase limit.
    const Eigen::Matrix3d m = mf_response_matrix(cfg, echo);
    Eigen::Vector3d z;
    for (int k = 0; k < 3; ++k) {
      double num = 0, den = 0;
      for (std::size_t i = 0; i < nf; ++i) {
        const double w = 1.0 / (sig(k, static_cast<Eigen::Index>(i)) *
                                sig(k, static_cast<Eigen::Index>(i)));
        num += w * opt.fractions[i] * (meas(k, static_cast<Eigen::Index>(i)) - base);
        den += w * opt.fractions[i] * opt.fractions[i];
      }
      z[k] = num / den;
      out.component_responses[static_cast<std::size_t>(k)] = z[k];
    }
    const Eigen::Vector3d b0 = m.fullPivLu().solve(z);
    // Gauss-Newton refinement on the full model, parameters scaled to O(1).
    const double scale = std::max(b0.norm(), 1e-15);
    std::array<SignPattern, 3> patterns = {sign_pattern(Component::x), sign_pattern(Component::y),
                                           sign_pattern(Component::z)};
    auto model = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
      const Eigen::Vector3d b = scale * Eigen::Vector3d(q[0], q[1], q[2]);
      Eigen::Index idx = 0;
      for (int k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < nf; ++i) {
          double mix = 0;
          for (std::size_t n = 0; n < 4; ++n) {
            mix += cfg.ratios[n] * patterns[static_cast<std::size_t>(k)].signs[n] *
                   std::sin(phi_per_t * opt.fractions[i] * u.axes[n].dot(b));
          }
          const double s_model = base + 0.5 * cfg.contrast * vis * mix;
          r[idx] = (s_model - meas(k, static_cast<Eigen::Index>(i))) /
                   sig(k, static_cast<Eigen::Index>(i));
          ++idx;
        }
      }
    };
    FitOptions fo;
    fo.max_iterations = 100;
    const FitResult fit = levenberg_marquardt(model, (b0 / scale).eval(), 3 * nf, fo);
    out.b_t = scale * Eigen::Vector3d(fit.params[0], fit.params[1], fit.params[2]);
    if (noisy) {
      // The residuals are whitened by the known shot noise, so (J^T J)^-1 is
      // the parameter covariance directly (no reduced-chi^2 rescaling, which
      // would vanish at zero degrees of freedom).
      Eigen::MatrixXd jac(3 * static_cast<Eigen::Index>(nf), 3);
      Eigen::VectorXd r0(3 * static_cast<Eigen::Index>(nf)), rj(3 * static_cast<Eigen::Index>(nf));
      model(fit.params, r0);
      for (Eigen::Index j = 0; j < 3; ++j) {
        const double h = 1e-7 * std::max(1.0, std::abs(fit.params[j]));
        Eigen::VectorXd pj = fit.params;
        pj[j] += h;
        model(pj, rj);
        jac.col(j) = (rj - r0) / h;
      }
      out.covariance_t2 =
          scale * scale *
          (jac.transpose() * jac).ldlt().solve(Eigen::Matrix3d::Identity()).eval();
    }
  }

  out.amplitude_t = out.b_t.norm();
  if (noisy) {
    // Amplitude uncertainty along the estimated direction.
    const Eigen::Vector3d d =
        out.amplitude_t > 0 ? Eigen::Vector3d(out.b_t / out.amplitude_t) : Eigen::Vector3d(0, 0, 1);
    const double sigma_amp = std::sqrt(std::max(0.0, d.dot(out.covariance_t2 * d)));
    if (out.amplitude_t <= opt.ambiguous_sigma_factor * sigma_amp) {
      throw AmbiguousSign("estimate_vector: amplitude " + std::to_string(out.amplitude_t) +
                          " T is consistent with zero");
    }
  } else if (!(out.amplitude_t > 0)) {
    throw AmbiguousSign("estimate_vector: zero amplitude, direction undefined");
  }
  out.direction = out.b_t / out.amplitude_t;
  return out;
}

}  // namespace nvsense
