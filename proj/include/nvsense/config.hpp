#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nvsense/ensemble.hpp"
#include "nvsense/errors.hpp"
#include "nvsense/experiments.hpp"
#include "nvsense/geometry.hpp"
#include "nvsense/spindynamics.hpp"

namespace nvsense {

using ordered_json = nlohmann::ordered_json;

// FNV-1a over the raw bytes; identifies the exact config content in outputs.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::array<char, 17> buf{};
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return std::string(buf.data(), 16);
}

// The static bias field is given either directly or as the four measured
// lower-branch resonances to calibrate from (exactly one of the two).
struct StaticFieldSpec {
  std::optional<Eigen::Vector3d> b_t;
  std::optional<std::array<double, 4>> measured_f_hz;
  bool fit_d = true;
};

struct RunConfig {
  EnsembleConfig ensemble;
  StaticFieldSpec static_field;
  EchoConfig echo;
  double rabi_hz = 2.5e6;
  bool finite_pulses = false;
  double overhead_s = 1e-5;  // dead time per shot on top of tau

  Eigen::Vector3d ac_direction = Eigen::Vector3d(0, 0, 1);  // need not be unit
  double ac_amplitude_t = 2.5e-7;

  // Sweep shapes.
  int amplitude_points = 21;
  int odmr_points = 1901;
  double odmr_linewidth_hwhm_hz = 3e6;
  double rabi_max_s = 1.2e-6;
  int rabi_points = 121;
  std::vector<double> time_grid_s = {1e-3,    2.15e-3, 4.64e-3, 1e-2,    2.15e-2,
                                     4.64e-2, 1e-1,    2.15e-1, 4.64e-1, 1.0};

  // Noise budget.
  bool noise_enabled = true;
  double sweep_time_per_point_s = 10.0;
  double vector_time_per_curve_s = 8000.0;
  int noise_reps = 400;
  long long sensitivity_mc_reps = 20000;
  std::vector<double> vector_fractions = {0.25, 0.5, 0.75, 1.0};

  std::array<std::array<int, 2>, 3> pairs = {{{1, 3}, {1, 2}, {1, 4}}};
  std::optional<std::uint64_t> seed;
  std::string config_hash;  // filled on load

  double shots_per_second() const { return 1.0 / (echo.tau_s + overhead_s); }

  std::uint64_t require_seed() const {
    if (!seed) throw ConfigError("this command draws random samples and needs a seed");
    return *seed;
  }
};

namespace detail {

inline const ordered_json& require_field(const ordered_json& j, const char* key,
                                         const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError("missing config field " + path + "." + key);
  return *it;
}

inline double as_number(const ordered_json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError("config field " + path + " must be a number");
  return j.get<double>();
}

inline double get_number(const ordered_json& j, const char* key, const std::string& path,
                         double fallback) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : as_number(*it, path + "." + key);
}

inline std::vector<double> as_number_list(const ordered_json& j, const std::string& path,
                                          std::size_t exact = 0) {
  if (!j.is_array()) throw ConfigError("config field " + path + " must be an array");
  if (exact && j.size() != exact) {
    throw ConfigError("config field " + path + " must have " + std::to_string(exact) +
                      " entries");
  }
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(as_number(v, path));
  return out;
}

}  // namespace detail

// Parse and validate a run config from its JSON form. `hash_source` is the
// byte string identified by config_hash (the raw file content when loaded
// from disk).
inline RunConfig parse_run_config(const ordered_json& j, std::string_view hash_source) {
  RunConfig cfg;
  cfg.config_hash = fnv1a_hex(hash_source);

  const auto schema = j.find("schema");
  if (schema == j.end() || !schema->is_string() || schema->get<std::string>() != "nvsense-run/1") {
    throw ConfigError("config schema must be \"nvsense-run/1\"");
  }
  if (const auto it = j.find("seed"); it != j.end()) {
    if (it->is_number_unsigned()) {
      cfg.seed = it->get<std::uint64_t>();
    } else if (it->is_number_integer() && it->get<std::int64_t>() >= 0) {
      cfg.seed = static_cast<std::uint64_t>(it->get<std::int64_t>());
    } else {
      throw ConfigError("config field seed must be a non-negative integer");
    }
  }

  const auto& ens = detail::require_field(j, "ensemble", "");
  {
    const auto ratios = detail::as_number_list(detail::require_field(ens, "ratios", "ensemble"),
                                               "ensemble.ratios", 4);
    for (std::size_t n = 0; n < 4; ++n) cfg.ensemble.ratios[n] = ratios[n];
    cfg.ensemble.contrast = detail::get_number(ens, "contrast", "ensemble", cfg.ensemble.contrast);
    cfg.ensemble.t2_s = detail::get_number(ens, "t2_s", "ensemble", cfg.ensemble.t2_s);
    cfg.ensemble.stretch = detail::get_number(ens, "stretch", "ensemble", cfg.ensemble.stretch);
    cfg.ensemble.photon_rate_hz =
        detail::get_number(ens, "photon_rate_hz", "ensemble", cfg.ensemble.photon_rate_hz);
    cfg.ensemble.readout_window_s =
        detail::get_number(ens, "readout_window_s", "ensemble", cfg.ensemble.readout_window_s);
    cfg.ensemble.d_hz = detail::get_number(ens, "d_hz", "ensemble", cfg.ensemble.d_hz);
    cfg.ensemble.gamma_hz_per_t =
        detail::get_number(ens, "gamma_hz_per_t", "ensemble", cfg.ensemble.gamma_hz_per_t);
    try {
      cfg.ensemble.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("ensemble: ") + e.what());
    }
  }

  const auto& sf = detail::require_field(j, "static_field", "");
  {
    const bool has_b = sf.contains("b_t");
    const bool has_f = sf.contains("measured_f_hz");
    if (has_b == has_f) {
      throw ConfigError("static_field must contain exactly one of b_t or measured_f_hz");
    }
    if (has_b) {
      const auto b = detail::as_number_list(sf.at("b_t"), "static_field.b_t", 3);
      cfg.static_field.b_t = Eigen::Vector3d(b[0], b[1], b[2]);
    } else {
      const auto f = detail::as_number_list(sf.at("measured_f_hz"), "static_field.measured_f_hz", 4);
      std::array<double, 4> arr{};
      for (std::size_t n = 0; n < 4; ++n) arr[n] = f[n];
      cfg.static_field.measured_f_hz = arr;
      if (const auto it = sf.find("fit_d"); it != sf.end()) {
        if (!it->is_boolean()) throw ConfigError("static_field.fit_d must be a boolean");
        cfg.static_field.fit_d = it->get<bool>();
      }
    }
  }

  if (const auto it = j.find("echo"); it != j.end()) {
    cfg.echo.tau_s = detail::get_number(*it, "tau_s", "echo", cfg.echo.tau_s);
    cfg.echo.f_ac_hz = detail::get_number(*it, "f_ac_hz", "echo", cfg.echo.f_ac_hz);
    cfg.echo.phase0_rad = detail::get_number(*it, "phase0_rad", "echo", cfg.echo.phase0_rad);
    cfg.echo.readout_phase_rad =
        detail::get_number(*it, "readout_phase_rad", "echo", cfg.echo.readout_phase_rad);
    try {
      cfg.echo.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("echo: ") + e.what());
    }
  }

  if (const auto it = j.find("drive"); it != j.end()) {
    cfg.rabi_hz = detail::get_number(*it, "rabi_hz", "drive", cfg.rabi_hz);
    if (!(cfg.rabi_hz > 0)) throw ConfigError("drive.rabi_hz must be positive");
    if (const auto fp = it->find("finite_pulses"); fp != it->end()) {
      if (!fp->is_boolean()) throw ConfigError("drive.finite_pulses must be a boolean");
      cfg.finite_pulses = fp->get<bool>();
    }
  }
  if (const auto it = j.find("timing"); it != j.end()) {
    cfg.overhead_s = detail::get_number(*it, "overhead_s", "timing", cfg.overhead_s);
    if (cfg.overhead_s < 0) throw ConfigError("timing.overhead_s must be non-negative");
  }

  const auto& ac = detail::require_field(j, "ac_field", "");
  {
    const auto d = detail::as_number_list(detail::require_field(ac, "direction", "ac_field"),
                                          "ac_field.direction", 3);
    cfg.ac_direction = Eigen::Vector3d(d[0], d[1], d[2]);
    if (!(cfg.ac_direction.norm() > 0)) throw ConfigError("ac_field.direction must be nonzero");
    cfg.ac_amplitude_t = detail::get_number(ac, "amplitude_t", "ac_field", cfg.ac_amplitude_t);
    if (!(cfg.ac_amplitude_t > 0)) throw ConfigError("ac_field.amplitude_t must be positive");
  }

  if (const auto it = j.find("sweeps"); it != j.end()) {
    cfg.amplitude_points = static_cast<int>(
        detail::get_number(*it, "amplitude_points", "sweeps", cfg.amplitude_points));
    cfg.odmr_points =
        static_cast<int>(detail::get_number(*it, "odmr_points", "sweeps", cfg.odmr_points));
    cfg.odmr_linewidth_hwhm_hz = detail::get_number(*it, "odmr_linewidth_hwhm_hz", "sweeps",
                                                    cfg.odmr_linewidth_hwhm_hz);
    cfg.rabi_max_s = detail::get_number(*it, "rabi_max_s", "sweeps", cfg.rabi_max_s);
    cfg.rabi_points =
        static_cast<int>(detail::get_number(*it, "rabi_points", "sweeps", cfg.rabi_points));
    if (const auto tg = it->find("time_grid_s"); tg != it->end()) {
      cfg.time_grid_s = detail::as_number_list(*tg, "sweeps.time_grid_s");
    }
    if (cfg.amplitude_points < 5 || cfg.odmr_points < 32 || cfg.rabi_points < 16) {
      throw ConfigError("sweeps: grids are too small");
    }
    if (!(cfg.odmr_linewidth_hwhm_hz > 0) || !(cfg.rabi_max_s > 0)) {
      throw ConfigError("sweeps: linewidth and rabi_max_s must be positive");
    }
  }

  if (const auto it = j.find("noise"); it != j.end()) {
    if (const auto en = it->find("enabled"); en != it->end()) {
      if (!en->is_boolean()) throw ConfigError("noise.enabled must be a boolean");
      cfg.noise_enabled = en->get<bool>();
    }
    cfg.sweep_time_per_point_s = detail::get_number(*it, "sweep_time_per_point_s", "noise",
                                                    cfg.sweep_time_per_point_s);
    cfg.vector_time_per_curve_s = detail::get_number(*it, "vector_time_per_curve_s", "noise",
                                                     cfg.vector_time_per_curve_s);
    cfg.noise_reps =
        static_cast<int>(detail::get_number(*it, "noise_reps", "noise", cfg.noise_reps));
    cfg.sensitivity_mc_reps = static_cast<long long>(
        detail::get_number(*it, "sensitivity_mc_reps", "noise", cfg.sensitivity_mc_reps));
    if (const auto vf = it->find("vector_fractions"); vf != it->end()) {
      cfg.vector_fractions = detail::as_number_list(*vf, "noise.vector_fractions");
    }
    if (cfg.sweep_time_per_point_s < 0 || cfg.vector_time_per_curve_s < 0 ||
        cfg.noise_reps < 2 || cfg.sensitivity_mc_reps < 0) {
      throw ConfigError("noise: invalid budget values");
    }
  }

  if (const auto it = j.find("sensitivity"); it != j.end()) {
    if (const auto pr = it->find("pairs"); pr != it->end()) {
      static const std::array<const char*, 3> keys = {"x", "y", "z"};
      for (std::size_t k = 0; k < 3; ++k) {
        const auto pair = detail::as_number_list(
            detail::require_field(*pr, keys[k], "sensitivity.pairs"),
            std::string("sensitivity.pairs.") + keys[k], 2);
        cfg.pairs[k] = {static_cast<int>(pair[0]), static_cast<int>(pair[1])};
        for (int axis : cfg.pairs[k]) {
          if (axis < 1 || axis > 4) throw ConfigError("sensitivity.pairs: axes must be in 1..4");
        }
        if (cfg.pairs[k][0] == cfg.pairs[k][1]) {
          throw ConfigError("sensitivity.pairs: a pair needs two distinct axes");
        }
      }
    }
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  ordered_json j;
  try {
    j = ordered_json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j, bytes);
}

// Resolve the static bias field, running the calibration when the config
// gives measured resonances instead of an explicit vector.
struct ResolvedStaticField {
  Eigen::Vector3d b_t;
  std::optional<StaticFieldCalibration> calibration;
};

inline ResolvedStaticField resolve_static_field(const RunConfig& cfg) {
  if (cfg.static_field.b_t) return {*cfg.static_field.b_t, std::nullopt};
  CalibrationOptions opt;
  opt.fit_d = cfg.static_field.fit_d;
  StaticFieldCalibration cal = calibrate_static_field(
      *cfg.static_field.measured_f_hz, cfg.ensemble.d_hz, cfg.ensemble.gamma_hz_per_t, opt);
  return {cal.b_static_t, cal};
}

}  // namespace nvsense
