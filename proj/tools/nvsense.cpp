// Command-line front end: ODMR / Rabi / echo sweeps, sensitivity accounting
// and vector-field estimation for a four-axis NV ensemble magnetometer.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nvsense/nvsense.hpp"

namespace fs = std::filesystem;
using namespace nvsense;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = ".";
  int threads = 1;
  std::optional<std::uint64_t> seed_override;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += c;
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

RunConfig load_config(const GlobalArgs& args) {
  if (args.config_path.empty()) throw ConfigError("this command requires --config");
  RunConfig cfg = load_run_config(args.config_path);
  if (args.seed_override) cfg.seed = *args.seed_override;
  return cfg;
}

OutputContext make_ctx(const RunConfig& cfg) {
  OutputContext ctx;
  ctx.config_hash = cfg.config_hash;
  if (cfg.seed) {
    ctx.seed = *cfg.seed;
    ctx.has_seed = true;
  }
  return ctx;
}

fs::path ensure_out_dir(const GlobalArgs& args) {
  fs::path out(args.out_dir);
  fs::create_directories(out);
  return out;
}

ordered_json vec3_json(const Eigen::Vector3d& v) {
  return ordered_json::array({v.x(), v.y(), v.z()});
}

ordered_json mat3_json(const Eigen::Matrix3d& m) {
  ordered_json rows = ordered_json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(ordered_json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return rows;
}

ordered_json entry_json(const SensitivityEntry& e) {
  ordered_json j;
  j["value_t_per_sqrt_hz"] = e.value_t_per_sqrt_hz;
  j["sigma_t_per_sqrt_hz"] = e.sigma_t_per_sqrt_hz;
  return j;
}

// Carriers on the lower-branch resonances of the configured static field;
// falls back to synthetic evenly spaced carriers when the configured field
// leaves the axes spectrally unresolved.
ChannelAssignment make_channels(const RunConfig& cfg, const Eigen::Vector3d& b_static_t,
                                double d_hz) {
  ChannelAssignment channels;
  const auto lines = resonance_frequencies(b_static_t, d_hz, cfg.ensemble.gamma_hz_per_t);
  for (std::size_t c = 0; c < 4; ++c) channels.carrier_hz[c] = lines[c].first;
  try {
    channels.validate(cfg.rabi_hz);
    return channels;
  } catch (const ValidationError&) {
    for (std::size_t c = 0; c < 4; ++c) {
      channels.carrier_hz[c] = 2.80e9 + 5e7 * static_cast<double>(c);
    }
    channels.validate(cfg.rabi_hz);
    std::cout << "note: axes unresolved at the configured static field; using synthetic"
                 " carriers\n";
    return channels;
  }
}

std::uint64_t sweep_shots(const RunConfig& cfg) {
  if (!cfg.noise_enabled || cfg.sweep_time_per_point_s <= 0) return 0;
  return static_cast<std::uint64_t>(
      std::max(1.0, std::round(cfg.sweep_time_per_point_s * cfg.shots_per_second())));
}

void print_calibration(const StaticFieldCalibration& cal) {
  std::cout << "static field calibration:\n";
  std::cout << "  B = (" << fmt("%.6f", cal.b_static_t.x() * 1e3) << ", "
            << fmt("%.6f", cal.b_static_t.y() * 1e3) << ", "
            << fmt("%.6f", cal.b_static_t.z() * 1e3) << ") mT, |B| = "
            << fmt("%.6f", cal.b_static_t.norm() * 1e3) << " mT\n";
  std::cout << "  D = " << fmt("%.6f", cal.d_hz * 1e-9) << " GHz, rms residual = "
            << fmt("%.3f", cal.residual_hz * 1e-6) << " MHz, " << cal.candidates.size()
            << " candidate(s)\n";
}

ordered_json calibration_json(const StaticFieldCalibration& cal) {
  ordered_json j;
  j["b_t"] = vec3_json(cal.b_static_t);
  j["magnitude_t"] = cal.b_static_t.norm();
  j["d_hz"] = cal.d_hz;
  j["residual_hz"] = cal.residual_hz;
  ordered_json cands = ordered_json::array();
  for (const auto& c : cal.candidates) {
    ordered_json cj;
    ordered_json signs = ordered_json::array();
    for (int s : c.signs) signs.push_back(s);
    cj["signs"] = signs;
    cj["b_t"] = vec3_json(c.b_t);
    cj["d_hz"] = c.d_hz;
    cj["residual_hz"] = c.residual_hz;
    cands.push_back(cj);
  }
  j["candidates"] = cands;
  return j;
}

int cmd_odmr(const GlobalArgs& args) {
  const RunConfig cfg = load_config(args);
  const fs::path out = ensure_out_dir(args);
  const OutputContext ctx = make_ctx(cfg);

  const ResolvedStaticField resolved = resolve_static_field(cfg);
  EnsembleConfig ens = cfg.ensemble;
  if (resolved.calibration) ens.d_hz = resolved.calibration->d_hz;
  const auto lines = resonance_frequencies(resolved.b_t, ens.d_hz, ens.gamma_hz_per_t);
  double lo = lines[0].first, hi = lines[0].second;
  for (const auto& [l, u] : lines) {
    lo = std::min(lo, l);
    hi = std::max(hi, u);
  }
  const double pad = 25.0 * cfg.odmr_linewidth_hwhm_hz;
  std::vector<double> grid(static_cast<std::size_t>(cfg.odmr_points));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = (lo - pad) + (hi - lo + 2 * pad) * static_cast<double>(i) /
                               static_cast<double>(grid.size() - 1);
  }

  OdmrOptions oo;
  oo.linewidth_hwhm_hz = cfg.odmr_linewidth_hwhm_hz;
  oo.shots_per_point = sweep_shots(cfg);
  if (oo.shots_per_point > 0) oo.seed = cfg.require_seed();
  const SweepResult sweep = simulate_odmr(ens, resolved.b_t, grid, oo, args.threads);
  write_sweep_csv(out / "odmr.csv", sweep, ctx);

  ordered_json j = json_header(ctx);
  if (resolved.calibration) {
    print_calibration(*resolved.calibration);
    j["calibration"] = calibration_json(*resolved.calibration);
  }

  if (hi - lo < cfg.odmr_linewidth_hwhm_hz) {
    // Axes degenerate (e.g. zero static field): a single dip at D.
    std::size_t imin = 1;
    for (std::size_t i = 1; i + 1 < sweep.mean.size(); ++i) {
      if (sweep.mean[i] < sweep.mean[imin]) imin = i;
    }
    const double h = grid[1] - grid[0];
    const double denom =
        sweep.mean[imin + 1] - 2 * sweep.mean[imin] + sweep.mean[imin - 1];
    const double f0 =
        grid[imin] -
        (denom != 0 ? 0.5 * h * (sweep.mean[imin + 1] - sweep.mean[imin - 1]) / denom : 0.0);
    std::cout << "resonances unresolved: single dip at " << fmt("%.6f", f0 * 1e-9) << " GHz\n";
    j["resolved"] = false;
    j["single_dip_hz"] = f0;
  } else {
    const OdmrFit fit = fit_odmr(sweep, cfg.odmr_linewidth_hwhm_hz);
    std::cout << "fitted resonances:\n";
    for (std::size_t d = 0; d < 8; ++d) {
      std::cout << "  f" << d + 1 << " = " << fmt("%.6f", fit.centers_hz[d] * 1e-9)
                << " GHz  depth = " << fmt("%.4f", fit.depths[d]) << "\n";
    }
    std::cout << "  width (HWHM) = " << fmt("%.3f", fit.width_hwhm_hz * 1e-6)
              << " MHz, rms residual = " << fmt("%.2e", fit.rms_residual) << "\n";
    j["resolved"] = true;
    ordered_json jf;
    jf["centers_hz"] = fit.centers_hz;
    jf["depths"] = fit.depths;
    jf["width_hwhm_hz"] = fit.width_hwhm_hz;
    jf["baseline"] = fit.baseline;
    jf["rms_residual"] = fit.rms_residual;
    j["fit"] = jf;
  }
  ordered_json model = ordered_json::array();
  for (const auto& [l, u] : lines) model.push_back(ordered_json::array({l, u}));
  j["model_resonances_hz"] = model;
  write_json_file(out / "odmr.json", j);
  return 0;
}

int cmd_rabi(const GlobalArgs& args) {
  const RunConfig cfg = load_config(args);
  const fs::path out = ensure_out_dir(args);
  const OutputContext ctx = make_ctx(cfg);

  std::vector<double> grid(static_cast<std::size_t>(cfg.rabi_points));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = cfg.rabi_max_s * static_cast<double>(i) / static_cast<double>(grid.size() - 1);
  }
  RabiOptions ro;
  ro.shots_per_point = sweep_shots(cfg);
  if (ro.shots_per_point > 0) ro.seed = cfg.require_seed();
  const RabiResult rr = simulate_rabi(cfg.ensemble, grid, cfg.rabi_hz, ro, args.threads);

  std::cout << "orientation ratios from Rabi amplitudes:\n";
  for (std::size_t n = 0; n < 4; ++n) {
    write_sweep_csv(out / ("rabi_NV" + std::to_string(n + 1) + ".csv"), rr.curves[n], ctx);
    std::cout << "  NV" << n + 1 << ": ratio = " << fmt("%.4f", rr.fitted_ratios[n])
              << "  (rabi = " << fmt("%.4f", rr.fitted_rabi_hz[n] * 1e-6) << " MHz)\n";
  }
  std::cout << "  max rms residual = " << fmt("%.2e", rr.max_rms_residual) << "\n";

  ordered_json j = json_header(ctx);
  j["ratios"] = rr.fitted_ratios;
  j["rabi_hz"] = rr.fitted_rabi_hz;
  j["max_rms_residual"] = rr.max_rms_residual;
  write_json_file(out / "rabi.json", j);
  return 0;
}

int cmd_echo_sweep(const GlobalArgs& args, const std::string& mode_token,
                   const std::string& seq_in, const std::string& emit_seq) {
  const RunConfig cfg = load_config(args);
  const fs::path out = ensure_out_dir(args);
  const OutputContext ctx = make_ctx(cfg);

  const ResolvedStaticField resolved = resolve_static_field(cfg);
  const double d_hz = resolved.calibration ? resolved.calibration->d_hz : cfg.ensemble.d_hz;
  const ChannelAssignment channels = make_channels(cfg, resolved.b_t, d_hz);

  SequenceProgram program;
  if (!seq_in.empty()) {
    std::ifstream in(seq_in, std::ios::binary);
    if (!in) throw ConfigError("cannot open sequence file: " + seq_in);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::vector<std::string> warnings;
    program = parse_sequence(buf.str(), &warnings);
    for (const auto& w : warnings) std::cout << "warning: " << w << "\n";
    program.validate(channels);
  } else {
    DriveConfig drive;
    drive.rabi_hz = cfg.rabi_hz;
    program = build_echo_sequence(parse_mode_token(mode_token), cfg.echo.tau_s, drive, channels);
  }
  if (!emit_seq.empty()) {
    write_text_file(emit_seq, serialize_sequence(program));
  }

  EchoSweepOptions so;
  so.shots_per_point = sweep_shots(cfg);
  if (so.shots_per_point > 0) so.seed = cfg.require_seed();
  const std::vector<double> grid =
      symmetric_amplitude_grid(cfg.ac_amplitude_t, cfg.amplitude_points);
  const SweepResult sweep = echo_amplitude_sweep(cfg.ensemble, cfg.echo, program, channels,
                                                 cfg.ac_direction, grid, so, args.threads);
  write_sweep_csv(out / "echo_sweep.csv", sweep, ctx);

  std::cout << "mode " << sweep.meta.mode << ": gradient = " << fmt("%.6e", sweep.gradient)
            << " +/- " << fmt("%.2e", sweep.gradient_sigma) << " per tesla\n";
  ordered_json j = json_header(ctx);
  j["mode"] = sweep.meta.mode;
  j["gradient_per_t"] = sweep.gradient;
  j["gradient_sigma_per_t"] = sweep.gradient_sigma;
  write_json_file(out / "echo_sweep.json", j);
  return 0;
}

int cmd_sensitivity(const GlobalArgs& args, const std::string& scheme_token) {
  const RunConfig cfg = load_config(args);
  const fs::path out = ensure_out_dir(args);
  const OutputContext ctx = make_ctx(cfg);

  SensitivityOptions so;
  if (scheme_token == "single") {
    so.scheme = Scheme::single;
  } else if (scheme_token == "multi") {
    so.scheme = Scheme::multi;
  } else if (scheme_token == "both") {
    so.scheme = Scheme::both;
  } else {
    throw ConfigError("--scheme must be single, multi or both");
  }
  so.pairs = cfg.pairs;
  so.shots_per_second = cfg.shots_per_second();
  so.sweep_time_per_point_s = cfg.noise_enabled ? cfg.sweep_time_per_point_s : 0.0;
  so.mc_reps = cfg.noise_enabled && so.scheme == Scheme::both ? cfg.sensitivity_mc_reps : 0;
  if (so.sweep_time_per_point_s > 0 || so.mc_reps > 0) so.seed = cfg.require_seed();
  so.amplitude_max_t = cfg.ac_amplitude_t;
  so.amplitude_points = cfg.amplitude_points;
  so.rabi_hz = cfg.rabi_hz;

  const SensitivityReport report =
      compute_sensitivity(cfg.ensemble, cfg.echo, cfg.ac_direction, so, args.threads);

  for (const SweepResult& sweep : report.sweeps) {
    write_sweep_csv(out / ("sweep_" + sanitize(sweep.meta.mode) + ".csv"), sweep, ctx);
  }

  ordered_json j = json_header(ctx);
  j["scheme"] = scheme_token;
  j["kappa_per_t"] = report.kappa_per_t;
  const auto to_nt = [](double v) { return v * 1e9; };
  if (so.scheme != Scheme::multi) {
    std::cout << "per-axis sensitivity (configured direction):\n";
    ordered_json pj = ordered_json::array();
    for (std::size_t n = 0; n < 4; ++n) {
      std::cout << "  NV" << n + 1 << ": "
                << fmt("%.2f", to_nt(report.per_axis[n].value_t_per_sqrt_hz)) << " +/- "
                << fmt("%.2f", to_nt(report.per_axis[n].sigma_t_per_sqrt_hz)) << " nT/sqrt(Hz)\n";
      pj.push_back(entry_json(report.per_axis[n]));
    }
    j["per_axis"] = pj;
  }
  static const char* comp[3] = {"x", "y", "z"};
  if (so.scheme != Scheme::multi) {
    std::cout << "conventional per-component (two-axis pairs):\n";
    ordered_json cj;
    for (std::size_t k = 0; k < 3; ++k) {
      std::cout << "  " << comp[k] << " (NV" << so.pairs[k][0] << ",NV" << so.pairs[k][1]
                << "): " << fmt("%.2f", to_nt(report.conventional[k].value_t_per_sqrt_hz))
                << " +/- " << fmt("%.2f", to_nt(report.conventional[k].sigma_t_per_sqrt_hz))
                << " nT/sqrt(Hz)\n";
      cj[comp[k]] = entry_json(report.conventional[k]);
    }
    j["conventional"] = cj;
  }
  if (so.scheme != Scheme::single) {
    std::cout << "multi-frequency per-component:\n";
    ordered_json mj;
    for (std::size_t k = 0; k < 3; ++k) {
      std::cout << "  " << comp[k] << ": "
                << fmt("%.2f", to_nt(report.multi[k].value_t_per_sqrt_hz)) << " +/- "
                << fmt("%.2f", to_nt(report.multi[k].sigma_t_per_sqrt_hz)) << " nT/sqrt(Hz)\n";
      mj[comp[k]] = entry_json(report.multi[k]);
    }
    j["multi"] = mj;
    std::cout << "best pattern for the configured direction: "
              << component_name(report.multi_best_component) << ", "
              << fmt("%.2f", to_nt(report.multi_best.value_t_per_sqrt_hz)) << " +/- "
              << fmt("%.2f", to_nt(report.multi_best.sigma_t_per_sqrt_hz)) << " nT/sqrt(Hz)\n";
    j["multi_best"] = entry_json(report.multi_best);
    j["multi_best_component"] = component_name(report.multi_best_component);
  }
  if (so.scheme == Scheme::both) {
    std::cout << "improvement (conventional / multi-frequency): ";
    for (std::size_t k = 0; k < 3; ++k) {
      std::cout << comp[k] << "=" << fmt("%.3f", report.improvement[k]) << (k < 2 ? ", " : "\n");
    }
    std::cout << "ideal gradient ratio: ";
    for (std::size_t k = 0; k < 3; ++k) {
      std::cout << comp[k] << "=" << fmt("%.3f", report.ideal_gradient_ratio[k])
                << (k < 2 ? ", " : "\n");
    }
    j["improvement"] = report.improvement;
    j["ideal_gradient_ratio"] = report.ideal_gradient_ratio;
    if (so.mc_reps > 0) {
      std::cout << "monte-carlo delta-B ratio: ";
      for (std::size_t k = 0; k < 3; ++k) {
        std::cout << comp[k] << "=" << fmt("%.3f", report.mc_ratio[k]) << (k < 2 ? ", " : "\n");
      }
      j["mc_ratio"] = report.mc_ratio;
      j["mc_reps"] = so.mc_reps;
    }
  }

  // Shot-noise scaling check on the multi-frequency baseline.
  if (cfg.noise_enabled && !cfg.time_grid_s.empty()) {
    const NoiseScan scan = noise_vs_integration_time(
        cfg.ensemble, 1.0 - 0.5 * cfg.ensemble.contrast, cfg.time_grid_s,
        cfg.shots_per_second(), cfg.noise_reps, cfg.require_seed(), args.threads);
    std::string body = csv_preamble(ctx);
    body += "integration_time_s,delta_p\n";
    for (const auto& p : scan.points) {
      body += nvsense::detail::format_double(p.time_s) + "," +
              nvsense::detail::format_double(p.delta_p) + "\n";
    }
    write_text_file(out / "noise_scan.csv", body);
    std::cout << "noise scaling: log-log slope = " << fmt("%.4f", scan.loglog_slope) << " +/- "
              << fmt("%.4f", scan.loglog_slope_sigma) << "\n";
    j["noise_loglog_slope"] = scan.loglog_slope;
    j["noise_loglog_slope_sigma"] = scan.loglog_slope_sigma;
  }
  write_json_file(out / "sensitivity.json", j);
  return 0;
}

int cmd_vector(const GlobalArgs& args) {
  const RunConfig cfg = load_config(args);
  const fs::path out = ensure_out_dir(args);
  const OutputContext ctx = make_ctx(cfg);

  const Eigen::Vector3d truth = cfg.ac_direction.normalized() * cfg.ac_amplitude_t;
  VectorOptions vo;
  vo.fractions = cfg.vector_fractions;
  vo.time_per_curve_s = cfg.noise_enabled ? cfg.vector_time_per_curve_s : 0.0;
  vo.shots_per_second = cfg.shots_per_second();
  if (vo.time_per_curve_s > 0) vo.seed = cfg.require_seed();
  vo.rabi_hz = cfg.rabi_hz;

  ordered_json j = json_header(ctx);
  j["truth"] = {{"b_t", vec3_json(truth)},
                {"direction", vec3_json(truth.normalized())},
                {"amplitude_t", truth.norm()}};

  for (const VectorScheme scheme :
       {VectorScheme::conventional, VectorScheme::multi_frequency}) {
    const char* name = scheme == VectorScheme::conventional ? "conventional" : "multi_frequency";
    const VectorEstimate est =
        estimate_vector(cfg.ensemble, cfg.echo, truth, scheme, vo, args.threads);
    const double angle = angle_between_deg(est.direction, truth.normalized());
    const double amp_err = est.amplitude_t / truth.norm() - 1.0;
    std::cout << name << ": |B| = " << fmt("%.4f", est.amplitude_t * 1e9) << " nT, direction = ("
              << fmt("%.6f", est.direction.x()) << ", " << fmt("%.6f", est.direction.y()) << ", "
              << fmt("%.6f", est.direction.z()) << ")\n";
    std::cout << "  angular error = " << fmt("%.4f", angle)
              << " deg, amplitude error = " << fmt("%.3f", amp_err * 100) << " %\n";

    ordered_json ej;
    ej["b_t"] = vec3_json(est.b_t);
    ej["direction"] = vec3_json(est.direction);
    ej["amplitude_t"] = est.amplitude_t;
    ej["covariance_t2"] = mat3_json(est.covariance_t2);
    ej["angular_error_deg"] = angle;
    ej["amplitude_rel_error"] = amp_err;
    if (scheme == VectorScheme::conventional) {
      ej["axis_projections_t"] = est.axis_projections_t;
    } else {
      ej["component_responses"] = est.component_responses;
    }
    j[name] = ej;
  }
  write_json_file(out / "vector.json", j);
  return 0;
}

int cmd_seq_check(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open sequence file: " + file);
  std::ostringstream buf;
  buf << in.rdbuf();

  std::vector<std::string> warnings;
  const SequenceProgram program = parse_sequence(buf.str(), &warnings);
  for (const auto& w : warnings) std::cout << "warning: " << w << "\n";

  ChannelAssignment channels;
  for (std::size_t c = 0; c < 4; ++c) channels.carrier_hz[c] = 2.80e9 + 5e7 * static_cast<double>(c);
  const auto violations = validate_against_topology(program, channels);
  for (const auto& v : violations) std::cout << "topology: " << v << "\n";
  if (!violations.empty()) return 1;

  std::cout << "ok: mode " << mode_name(program.mode) << ", tau = "
            << nvsense::detail::format_double(program.tau_s) << " s, " << program.events.size()
            << " pulses\n";
  std::cout << serialize_sequence(program);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  GlobalArgs args;
  CLI::App app{"Four-axis NV-ensemble AC magnetometry simulator"};
  app.require_subcommand(1);
  app.add_option("--config", args.config_path, "Run configuration JSON file");
  app.add_option("--seed", args.seed_override, "Override the config seed");
  app.add_option("--out", args.out_dir, "Output directory (default .)");
  app.add_option("--threads", args.threads, "Worker threads (default 1)")
      ->check(CLI::PositiveNumber);

  auto* odmr = app.add_subcommand("odmr", "Simulate and fit the ODMR spectrum");
  odmr->fallthrough();
  auto* rabi = app.add_subcommand("rabi", "Per-axis Rabi curves and orientation ratios");
  rabi->fallthrough();

  auto* echo = app.add_subcommand("echo-sweep", "Echo signal versus AC amplitude");
  echo->fallthrough();
  std::string mode_token = "multi_frequency(z)";
  std::string seq_in, emit_seq;
  echo->add_option("--mode", mode_token, "Sequence mode (default multi_frequency(z))");
  echo->add_option("--sequence", seq_in, "Run a sequence file instead of building one");
  echo->add_option("--emit-seq", emit_seq, "Write the sequence program to this file");

  auto* sens = app.add_subcommand("sensitivity", "Shot-noise-limited sensitivity budget");
  sens->fallthrough();
  std::string scheme_token = "both";
  sens->add_option("--scheme", scheme_token, "single, multi or both (default both)");

  auto* vect = app.add_subcommand("vector", "Full vector-field reconstruction");
  vect->fallthrough();

  auto* seq = app.add_subcommand("seq", "Sequence file utilities");
  seq->fallthrough();
  seq->require_subcommand(1);
  auto* check = seq->add_subcommand("check", "Parse and validate a sequence file");
  check->fallthrough();
  std::string seq_file;
  check->add_option("file", seq_file, "Sequence file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (odmr->parsed()) return cmd_odmr(args);
    if (rabi->parsed()) return cmd_rabi(args);
    if (echo->parsed()) return cmd_echo_sweep(args, mode_token, seq_in, emit_seq);
    if (sens->parsed()) return cmd_sensitivity(args, scheme_token);
    if (vect->parsed()) return cmd_vector(args);
    if (seq->parsed() && check->parsed()) return cmd_seq_check(seq_file);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const ZeroGradient& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
