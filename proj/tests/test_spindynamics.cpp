#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "nvsense/spindynamics.hpp"

using namespace nvsense;

namespace {

constexpr double kGamma = 2.8024e10;  // Hz/T
constexpr double kPi = std::numbers::pi;

// Independent oracle: evaluate the echo phase by adaptive quadrature of the
// toggled field instead of the closed form.
double phase_by_quadrature(double b_t, const EchoConfig& echo, double gamma) {
  using boost::math::quadrature::gauss_kronrod;
  auto field = [&](double t) {
    return b_t * std::sin(2.0 * kPi * echo.f_ac_hz * t + echo.phase0_rad);
  };
  const double first =
      gauss_kronrod<double, 61>::integrate(field, 0.0, echo.tau_s / 2, 12, 1e-13);
  const double second =
      gauss_kronrod<double, 61>::integrate(field, echo.tau_s / 2, echo.tau_s, 12, 1e-13);
  return 2.0 * kPi * gamma * (first - second);
}

}  // namespace

TEST_CASE("accumulated phase matches adaptive quadrature on a dense grid") {
  const double b = 1e-6;
  double worst = 0.0;
  for (int it = 0; it < 10; ++it) {
    const double tau = 1e-6 * std::pow(100.0, it / 9.0);
    for (int jf = 0; jf < 10; ++jf) {
      const double f = 1e4 * std::pow(100.0, jf / 9.0);
      for (int kp = 0; kp < 10; ++kp) {
        EchoConfig echo;
        echo.tau_s = tau;
        echo.f_ac_hz = f;
        echo.phase0_rad = 0.05 + 2.0 * kPi * kp / 10.0;
        const double closed = accumulated_phase(b, echo, kGamma);
        const double quad = phase_by_quadrature(b, echo, kGamma);
        const double scale = 2.0 * kPi * kGamma * b * tau;  // max possible |phi|
        worst = std::max(worst, std::abs(closed - quad) / scale);
      }
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("synchronized echo phase has the closed form 4 gamma b tau") {
  EchoConfig echo;
  echo.tau_s = 1e-5;
  echo.f_ac_hz = 1e5;
  echo.phase0_rad = 0.0;
  REQUIRE(echo.synchronized());
  const double phi = accumulated_phase(1e-6, echo, kGamma);
  // (2/pi) * 2 pi gamma b tau = 4 gamma b tau
  CHECK(phi == Catch::Approx(4.0 * kGamma * 1e-6 * 1e-5).epsilon(1e-12));
  CHECK(phi == Catch::Approx(1.12096).epsilon(1e-12));

  // A start-phase offset scales the synchronized phase by cos(phase0).
  echo.phase0_rad = 0.7;
  CHECK(accumulated_phase(1e-6, echo, kGamma) ==
        Catch::Approx(1.12096 * std::cos(0.7)).epsilon(1e-12));
}

TEST_CASE("DC field refocuses exactly") {
  EchoConfig echo;
  echo.tau_s = 3e-5;
  echo.f_ac_hz = 0.0;
  CHECK(accumulated_phase(5e-6, echo, kGamma) == 0.0);
  echo.f_ac_hz = 1e5;
  CHECK(accumulated_phase(0.0, echo, kGamma) == 0.0);
}

TEST_CASE("echo config validation") {
  EchoConfig echo;
  echo.tau_s = 0.0;
  CHECK_THROWS_AS(echo.validate(), ValidationError);
  echo.tau_s = 1e-5;
  echo.f_ac_hz = -1.0;
  CHECK_THROWS_AS(echo.validate(), ValidationError);
  echo.f_ac_hz = 1.37e5;
  CHECK_FALSE(echo.synchronized());
  echo.f_ac_hz = 0.0;
  CHECK_FALSE(echo.synchronized());
}

TEST_CASE("visibility model") {
  // C * exp(-(tau/T2)^p)
  CHECK(echo_visibility(1e-5, 2e-5, 1.0, 0.3) ==
        Catch::Approx(0.18195919791379003).epsilon(1e-14));
  CHECK(echo_visibility(1e-5, 2e-5, 2.0, 0.3) ==
        Catch::Approx(0.23364023492142146).epsilon(1e-14));
  CHECK(echo_visibility(0.0, 2e-5, 1.0, 0.3) == 0.3);
  CHECK_THROWS_AS(echo_visibility(1e-5, 0.0, 1.0, 0.3), ValidationError);
  CHECK_THROWS_AS(echo_visibility(1e-5, 2e-5, 0.0, 0.3), ValidationError);
  CHECK_THROWS_AS(echo_visibility(1e-5, 2e-5, 1.0, 1.5), ValidationError);
  CHECK_THROWS_AS(echo_visibility(-1e-5, 2e-5, 1.0, 0.3), ValidationError);
}

TEST_CASE("population readout convention") {
  CHECK(echo_population(0.0, 1.0, 0.0) == 1.0);
  CHECK(echo_population(kPi, 1.0, 0.0) == Catch::Approx(0.0).margin(1e-15));
  // Quadrature point: linear response, slope +V/2 in phi.
  const double v = 0.2, eps = 1e-6;
  const double slope =
      (echo_population(eps, v, kPi / 2) - echo_population(-eps, v, kPi / 2)) / (2 * eps);
  CHECK(slope == Catch::Approx(0.5 * v).epsilon(1e-6));
  CHECK_THROWS_AS(echo_population(0.0, 1.5, 0.0), ValidationError);
}

TEST_CASE("pi pulse timing and flop") {
  DriveConfig drive;
  drive.rabi_hz = 2.5e6;
  CHECK(drive.pi_duration_s() == 2e-7);

  drive.duration_s = drive.pi_duration_s();
  const TwoLevelState s = propagate_two_level(TwoLevelState::ground(), drive);
  CHECK(s.p1() == Catch::Approx(1.0).margin(1e-6));
  CHECK(s.bloch.norm() == Catch::Approx(1.0).margin(1e-9));

  DriveConfig bad;
  bad.rabi_hz = 0.0;
  CHECK_THROWS_AS(bad.pi_duration_s(), ValidationError);
}

TEST_CASE("detuned drive reproduces the analytic resonance curve") {
  const double rabi = 2.5e6;
  for (const double ratio : {0.0, 0.5, 1.0, 2.0}) {
    DriveConfig drive;
    drive.rabi_hz = rabi;
    drive.detuning_hz = ratio * rabi;
    const double f_eff = std::hypot(drive.rabi_hz, drive.detuning_hz);
    drive.duration_s = 0.5 / f_eff;  // first maximum of P(|1>)
    const TwoLevelState s = propagate_two_level(TwoLevelState::ground(), drive);
    const double expected = 1.0 / (1.0 + ratio * ratio);  // Omega^2/(Omega^2+Delta^2)
    CHECK(s.p1() == Catch::Approx(expected).margin(1e-6));
    CHECK(s.bloch.norm() == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("numeric propagator midpoints match the analytic flopping curve") {
  DriveConfig drive;
  drive.rabi_hz = 2.5e6;
  drive.detuning_hz = 1.25e6;
  const double f_eff = std::hypot(drive.rabi_hz, drive.detuning_hz);
  for (const double frac : {0.13, 0.35, 0.71, 1.42}) {
    drive.duration_s = frac / f_eff;
    const TwoLevelState s = propagate_two_level(TwoLevelState::ground(), drive);
    const double amp = drive.rabi_hz * drive.rabi_hz / (f_eff * f_eff);
    const double expected = amp * std::pow(std::sin(kPi * f_eff * drive.duration_s), 2);
    CHECK(s.p1() == Catch::Approx(expected).margin(1e-6));
  }
}

TEST_CASE("opposite-phase pulses invert each other") {
  TwoLevelState s = TwoLevelState::ground();
  s = ideal_pulse(s, kPi / 2, 0.3);
  s = ideal_pulse(s, kPi / 2, 0.3 + kPi);
  CHECK((s.bloch - Eigen::Vector3d(0, 0, 1)).norm() < 1e-15);

  DriveConfig fwd;
  fwd.rabi_hz = 2.5e6;
  fwd.pulse_phase_rad = 0.3;
  fwd.duration_s = 1e-7;
  DriveConfig bwd = fwd;
  bwd.pulse_phase_rad = 0.3 + kPi;
  TwoLevelState n = propagate_two_level(TwoLevelState::ground(), fwd);
  n = propagate_two_level(n, bwd);
  CHECK((n.bloch - Eigen::Vector3d(0, 0, 1)).norm() < 1e-9);
}

TEST_CASE("zero-duration or zero-amplitude drives are identity") {
  DriveConfig drive;
  drive.duration_s = 0.0;
  const TwoLevelState s = propagate_two_level(TwoLevelState::ground(), drive);
  CHECK((s.bloch - Eigen::Vector3d(0, 0, 1)).norm() == 0.0);
  DriveConfig off;
  off.rabi_hz = 0.0;
  off.duration_s = 1e-6;
  CHECK(propagate_two_level(TwoLevelState::ground(), off).p0() == 1.0);
}

TEST_CASE("absurd pulse durations fail loudly instead of looping") {
  DriveConfig drive;
  drive.rabi_hz = 2.5e6;
  drive.duration_s = 1.0;
  CHECK_THROWS_AS(propagate_two_level(TwoLevelState::ground(), drive), StepSizeUnderflow);
}

TEST_CASE("hahn echo composition") {
  EchoConfig echo;
  echo.tau_s = 1e-5;
  echo.f_ac_hz = 1e5;

  SECTION("zero field sits at the half point") {
    const auto p = run_hahn_echo({0, 0, 0, 0}, echo, kGamma, 0.2);
    for (double v : p) CHECK(v == Catch::Approx(0.5).margin(1e-12));
  }

  SECTION("readout sign flip mirrors the fringe") {
    const std::array<double, 4> b = {1e-8, -2e-8, 3e-8, 0.5e-8};
    const auto plus = run_hahn_echo(b, echo, kGamma, 0.2, {+1, +1, +1, +1});
    const auto minus = run_hahn_echo(b, echo, kGamma, 0.2, {-1, -1, -1, -1});
    for (std::size_t n = 0; n < 4; ++n) {
      CHECK(plus[n] + minus[n] == Catch::Approx(1.0).margin(1e-12));
    }
  }

  SECTION("matches the explicit composition") {
    const std::array<double, 4> b = {1e-8, -2e-8, 3e-8, 0.5e-8};
    const auto p = run_hahn_echo(b, echo, kGamma, 0.2, {+1, -1, +1, -1});
    for (std::size_t n = 0; n < 4; ++n) {
      const double phi = accumulated_phase(b[n], echo, kGamma);
      const double theta = kPi / 2 + ((n % 2) ? kPi : 0.0);
      CHECK(p[n] == echo_population(phi, 0.2, theta));
    }
  }
}

TEST_CASE("numeric echo oracle agrees with the analytic composition") {
  const double b = 1e-8;

  SECTION("synchronized") {
    EchoConfig echo;
    echo.tau_s = 1e-5;
    echo.f_ac_hz = 1e5;
    const double analytic =
        echo_population(accumulated_phase(b, echo, kGamma), 1.0, echo.readout_phase_rad);
    CHECK(simulate_echo_numeric(b, echo, kGamma) == Catch::Approx(analytic).margin(1e-6));
  }

  SECTION("incommensurate frequency and start phase") {
    EchoConfig echo;
    echo.tau_s = 1e-5;
    echo.f_ac_hz = 1.37e5;
    echo.phase0_rad = 0.7;
    const double analytic =
        echo_population(accumulated_phase(b, echo, kGamma), 1.0, echo.readout_phase_rad);
    CHECK(simulate_echo_numeric(b, echo, kGamma) == Catch::Approx(analytic).margin(1e-6));
  }

  SECTION("flipped readout") {
    EchoConfig echo;
    echo.tau_s = 1e-5;
    echo.f_ac_hz = 1.37e5;
    echo.phase0_rad = 0.7;
    echo.readout_phase_rad = kPi / 2 + kPi;
    const double analytic =
        echo_population(accumulated_phase(b, echo, kGamma), 1.0, echo.readout_phase_rad);
    CHECK(simulate_echo_numeric(b, echo, kGamma) == Catch::Approx(analytic).margin(1e-6));
  }

  SECTION("finite pulses perturb the ideal answer only slightly") {
    EchoConfig echo;
    echo.tau_s = 1e-5;
    echo.f_ac_hz = 1e5;
    const double ideal = simulate_echo_numeric(b, echo, kGamma);
    NumericEchoOptions opt;
    opt.finite_pulses = true;
    opt.rabi_hz = 2.5e6;
    const double finite = simulate_echo_numeric(b, echo, kGamma, opt);
    CHECK(std::abs(finite - ideal) < 5e-3);
  }

  SECTION("finite pulses need room inside tau") {
    EchoConfig echo;
    echo.tau_s = 3e-7;
    echo.f_ac_hz = 1e5;
    NumericEchoOptions opt;
    opt.finite_pulses = true;
    opt.rabi_hz = 2.5e6;  // pi pulse 200 ns, 2*d_pi > tau
    CHECK_THROWS_AS(simulate_echo_numeric(b, echo, kGamma, opt), InvalidTiming);
  }
}
