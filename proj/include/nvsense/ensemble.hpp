#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nvsense/errors.hpp"
#include "nvsense/fit.hpp"
#include "nvsense/rng.hpp"
#include "nvsense/spindynamics.hpp"

namespace nvsense {

// Physical parameters of the NV ensemble and its readout.
struct EnsembleConfig {
  std::array<double, 4> ratios = {0.25, 0.25, 0.25, 0.25};  // rho_n, sum = 1
  double contrast = 0.3;            // C
  double t2_s = 2e-5;
  double stretch = 1.0;             // p in exp(-(tau/T2)^p)
  double photon_rate_hz = 1.1e9;    // R, counts/s of readout window
  double readout_window_s = 3e-7;
  double d_hz = 2.87e9;
  double gamma_hz_per_t = 2.8024e10;

  void validate() const {
    double sum = 0;
    for (double r : ratios) {
      if (!(r >= 0)) throw ValidationError("EnsembleConfig: ratios must be >= 0");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw ValidationError("EnsembleConfig: ratios must sum to 1, got " + std::to_string(sum));
    }
    if (!(contrast > 0) || !(contrast <= 1)) {
      throw ValidationError("EnsembleConfig: contrast must be in (0, 1]");
    }
    if (!(photon_rate_hz > 0)) throw ValidationError("EnsembleConfig: photon_rate_hz must be > 0");
    if (!(readout_window_s > 0)) {
      throw ValidationError("EnsembleConfig: readout_window_s must be > 0");
    }
    if (!(t2_s > 0)) throw ValidationError("EnsembleConfig: t2_s must be > 0");
    if (!(stretch > 0)) throw ValidationError("EnsembleConfig: stretch must be > 0");
    if (!(d_hz > 0) || !(gamma_hz_per_t > 0)) {
      throw ValidationError("EnsembleConfig: d_hz and gamma_hz_per_t must be > 0");
    }
  }

  // Mean photon count of a single readout at bright-level signal 1.
  double photons_per_shot() const { return photon_rate_hz * readout_window_s; }
};

// One sampled readout: the Poisson-noisy estimate of the mean signal.
struct ReadoutSample {
  double mean_signal = 0.0;
  std::uint64_t counts = 0;
  double estimate = 0.0;
  std::uint64_t shots = 1;
};

// Normalized photoluminescence of the whole ensemble: bright level 1, dark
// level 1-C, each axis weighted by its orientation ratio:
//   S = sum_n rho_n [(1 - C) + C P_n] = (1 - C) + C sum_n rho_n P_n.
// In single-frequency mode the undriven axes stay in |0> regardless of the
// field; the caller passes P_n = 1 for them.
inline double ensemble_signal(const std::array<double, 4>& populations,
                              const EnsembleConfig& cfg) {
  cfg.validate();
  double mix = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double p = populations[n];
    if (!(p >= 0) || !(p <= 1)) {
      throw ValidationError("ensemble_signal: populations must be in [0, 1]");
    }
    mix += cfg.ratios[n] * p;
  }
  return (1.0 - cfg.contrast) + cfg.contrast * mix;
}

// Populations for single-frequency mode: only `axis_index` (1-based)
// responds, the other sub-ensembles sit at the bright level.
inline std::array<double, 4> single_frequency_populations(int axis_index, double driven_p) {
  if (axis_index < 1 || axis_index > 4) {
    throw ValidationError("single_frequency_populations: axis_index must be in 1..4");
  }
  std::array<double, 4> p = {1.0, 1.0, 1.0, 1.0};
  p[static_cast<std::size_t>(axis_index - 1)] = driven_p;
  return p;
}

// Draws the photon count of `shots` averaged readouts at the given mean
// signal: counts ~ Poisson(shots * R * w * S), estimate = counts / (shots *
// R * w). Deterministic for a fixed seed.
inline ReadoutSample sample_readout(double mean_signal, const EnsembleConfig& cfg,
                                    std::uint64_t shots, std::uint64_t seed) {
  cfg.validate();
  if (shots < 1) throw ValidationError("sample_readout: shots must be >= 1");
  if (!(mean_signal >= 0)) throw ValidationError("sample_readout: mean_signal must be >= 0");
  const double denom = static_cast<double>(shots) * cfg.photons_per_shot();
  std::mt19937_64 gen(seed);
  std::poisson_distribution<std::uint64_t> poisson(denom * mean_signal);
  ReadoutSample out;
  out.mean_signal = mean_signal;
  out.shots = shots;
  out.counts = mean_signal > 0 ? poisson(gen) : 0;
  out.estimate = static_cast<double>(out.counts) / denom;
  return out;
}

// Predicted shot-noise standard deviation of the estimate for the same
// accounting as sample_readout.
inline double predicted_readout_sigma(double mean_signal, const EnsembleConfig& cfg,
                                      std::uint64_t shots) {
  const double denom = static_cast<double>(shots) * cfg.photons_per_shot();
  return std::sqrt(mean_signal / denom);
}

struct NoisePoint {
  double time_s = 0.0;
  double delta_p = 0.0;  // empirical std of the readout estimate
};

struct NoiseScan {
  std::vector<NoisePoint> points;
  double loglog_slope = 0.0;
  double loglog_slope_sigma = 0.0;
};

// Monte Carlo delta-P versus integration time: at each T the number of
// shots grows as T * shots_per_second and delta-P is the empirical standard
// deviation over `reps` independent readouts. Poisson statistics make the
// fitted log-log slope -1/2.
inline NoiseScan noise_vs_integration_time(const EnsembleConfig& cfg, double mean_signal,
                                           const std::vector<double>& time_grid_s,
                                           double shots_per_second, int reps,
                                           std::uint64_t seed, int threads = 1) {
  cfg.validate();
  if (reps < 2) throw ValidationError("noise_vs_integration_time: reps must be >= 2");
  if (!(shots_per_second > 0)) {
    throw ValidationError("noise_vs_integration_time: shots_per_second must be > 0");
  }
  double prev = 0;
  for (double t : time_grid_s) {
    if (!(t > prev)) {
      throw ValidationError("noise_vs_integration_time: time grid must be positive ascending");
    }
    prev = t;
  }

  NoiseScan out;
  out.points.resize(time_grid_s.size());
  std::vector<double> estimates(static_cast<std::size_t>(reps));
  for (std::size_t ti = 0; ti < time_grid_s.size(); ++ti) {
    const double t = time_grid_s[ti];
    const auto shots =
        static_cast<std::uint64_t>(std::max<long long>(1, std::llround(t * shots_per_second)));
    parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t i) {
      const std::uint64_t task_seed =
          derive_seed(seed, rng_stream::kNoiseScan, ti * static_cast<std::size_t>(reps) + i);
      estimates[i] = sample_readout(mean_signal, cfg, shots, task_seed).estimate;
    });
    double mean = 0;
    for (double e : estimates) mean += e;
    mean /= reps;
    double ss = 0;
    for (double e : estimates) ss += (e - mean) * (e - mean);
    out.points[ti] = {t, std::sqrt(ss / (reps - 1))};
  }

  std::vector<double> ts, dps;
  for (const auto& p : out.points) {
    ts.push_back(p.time_s);
    dps.push_back(p.delta_p);
  }
  const LinearFit fit = loglog_fit(ts, dps);
  out.loglog_slope = fit.slope;
  out.loglog_slope_sigma = fit.slope_sigma;
  return out;
}

}  // namespace nvsense
