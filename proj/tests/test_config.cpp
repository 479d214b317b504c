#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "nvsense/config.hpp"

using namespace nvsense;

namespace {

ordered_json minimal_config() {
  return ordered_json::parse(R"({
    "schema": "nvsense-run/1",
    "ensemble": {"ratios": [0.29, 0.35, 0.21, 0.15]},
    "static_field": {"b_t": [1e-3, 2e-3, 3e-3]},
    "ac_field": {"direction": [0.23, 0.16, -0.97]}
  })");
}

}  // namespace

TEST_CASE("minimal config fills documented defaults") {
  const RunConfig cfg = parse_run_config(minimal_config(), "src");
  CHECK(cfg.ensemble.ratios == std::array<double, 4>{0.29, 0.35, 0.21, 0.15});
  CHECK(cfg.ensemble.contrast == 0.3);
  CHECK(cfg.echo.tau_s == 1e-5);
  CHECK(cfg.echo.f_ac_hz == 1e5);
  CHECK(cfg.rabi_hz == 2.5e6);
  CHECK(cfg.overhead_s == 1e-5);
  CHECK(cfg.ac_amplitude_t == 2.5e-7);
  CHECK(cfg.amplitude_points == 21);
  CHECK(cfg.noise_enabled);
  CHECK(cfg.vector_fractions == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  CHECK(cfg.pairs[0] == std::array<int, 2>{1, 3});
  CHECK_FALSE(cfg.seed.has_value());
  CHECK_FALSE(cfg.finite_pulses);
  REQUIRE(cfg.static_field.b_t.has_value());
  CHECK((*cfg.static_field.b_t - Eigen::Vector3d(1e-3, 2e-3, 3e-3)).norm() == 0.0);
}

TEST_CASE("shots per second follow tau plus overhead") {
  const RunConfig cfg = parse_run_config(minimal_config(), "src");
  CHECK(cfg.shots_per_second() == Catch::Approx(5e4).epsilon(1e-12));
}

TEST_CASE("seed is required for stochastic commands") {
  RunConfig cfg = parse_run_config(minimal_config(), "src");
  CHECK_THROWS_AS(cfg.require_seed(), ConfigError);
  ordered_json j = minimal_config();
  j["seed"] = 99;
  cfg = parse_run_config(j, "src");
  CHECK(cfg.require_seed() == 99);
  j["seed"] = -3;
  CHECK_THROWS_AS(parse_run_config(j, "src"), ConfigError);
}

TEST_CASE("schema tag is mandatory") {
  ordered_json j = minimal_config();
  j["schema"] = "nvsense-run/2";
  CHECK_THROWS_AS(parse_run_config(j, "src"), ConfigError);
  j.erase("schema");
  CHECK_THROWS_AS(parse_run_config(j, "src"), ConfigError);
}

TEST_CASE("static field needs exactly one source") {
  ordered_json j = minimal_config();
  j["static_field"]["measured_f_hz"] = {2.720e9, 2.806e9, 2.826e9, 2.862e9};
  CHECK_THROWS_AS(parse_run_config(j, "src"), ConfigError);  // both given
  j["static_field"].erase("b_t");
  const RunConfig cfg = parse_run_config(j, "src");
  REQUIRE(cfg.static_field.measured_f_hz.has_value());
  CHECK(cfg.static_field.fit_d);
  j["static_field"].erase("measured_f_hz");
  CHECK_THROWS_AS(parse_run_config(j, "src"), ConfigError);  // neither given
}

TEST_CASE("missing fields name their path") {
  ordered_json j = minimal_config();
  j.erase("ac_field");
  try {
    parse_run_config(j, "src");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("ac_field") != std::string::npos);
  }

  j = minimal_config();
  j["ensemble"].erase("ratios");
  try {
    parse_run_config(j, "src");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("ensemble.ratios") != std::string::npos);
  }
}

TEST_CASE("type errors name the offending field") {
  ordered_json j = minimal_config();
  j["echo"] = ordered_json::object();
  j["echo"]["tau_s"] = "soon";
  try {
    parse_run_config(j, "src");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("echo.tau_s") != std::string::npos);
  }
}

TEST_CASE("domain checks reject unusable values") {
  ordered_json j = minimal_config();
  j["ensemble"]["ratios"] = {0.5, 0.5, 0.5, 0.5};
  CHECK_THROWS_AS(parse_run_config(j, "src"), ConfigError);

  j = minimal_config();
  j["ac_field"]["direction"] = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(parse_run_config(j, "src"), ConfigError);

  j = minimal_config();
  j["ac_field"]["amplitude_t"] = -1e-7;
  CHECK_THROWS_AS(parse_run_config(j, "src"), ConfigError);

  j = minimal_config();
  j["sweeps"] = ordered_json::object();
  j["sweeps"]["amplitude_points"] = 3;
  CHECK_THROWS_AS(parse_run_config(j, "src"), ConfigError);

  j = minimal_config();
  j["noise"] = ordered_json::object();
  j["noise"]["noise_reps"] = 1;
  CHECK_THROWS_AS(parse_run_config(j, "src"), ConfigError);

  j = minimal_config();
  j["sensitivity"] = ordered_json::object();
  j["sensitivity"]["pairs"] = ordered_json::object();
  j["sensitivity"]["pairs"]["x"] = {1, 1};
  j["sensitivity"]["pairs"]["y"] = {1, 2};
  j["sensitivity"]["pairs"]["z"] = {1, 4};
  CHECK_THROWS_AS(parse_run_config(j, "src"), ConfigError);
}

TEST_CASE("config hash identifies the byte stream") {
  const std::string a = "alpha", b = "beta";
  CHECK(fnv1a_hex(a) != fnv1a_hex(b));
  CHECK(fnv1a_hex(a) == fnv1a_hex(a));
  CHECK(fnv1a_hex(a).size() == 16);
  const RunConfig cfg = parse_run_config(minimal_config(), a);
  CHECK(cfg.config_hash == fnv1a_hex(a));
}

TEST_CASE("static field resolution") {
  RunConfig cfg = parse_run_config(minimal_config(), "src");
  const ResolvedStaticField direct = resolve_static_field(cfg);
  CHECK_FALSE(direct.calibration.has_value());
  CHECK((direct.b_t - Eigen::Vector3d(1e-3, 2e-3, 3e-3)).norm() == 0.0);

  ordered_json j = minimal_config();
  j["static_field"].erase("b_t");
  j["static_field"]["measured_f_hz"] = {2.720e9, 2.806e9, 2.826e9, 2.862e9};
  cfg = parse_run_config(j, "src");
  const ResolvedStaticField calibrated = resolve_static_field(cfg);
  REQUIRE(calibrated.calibration.has_value());
  CHECK(calibrated.calibration->d_hz == Catch::Approx(2.887e9).margin(1.0));
  CHECK(calibrated.b_t.norm() == Catch::Approx(6.0869e-3).epsilon(1e-4));
}

TEST_CASE("loading a missing file fails cleanly") {
  CHECK_THROWS_AS(load_run_config("/nonexistent/nvsense.json"), ConfigError);
}
