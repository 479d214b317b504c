#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "nvsense/errors.hpp"
#include "nvsense/geometry.hpp"
#include "nvsense/spindynamics.hpp"
#include "nvsense/textformat.hpp"

namespace nvsense {

// Which microwave channel drives which axis, and at what carrier.
struct ChannelAssignment {
  std::array<double, 4> carrier_hz{};  // channel 1..4
  std::array<int, 4> target_axis = {1, 2, 3, 4};

  // The default margin keeps off-resonant excitation of a neighbouring
  // carrier below (rabi / gap)^2 ~ 6%; tighter spacing is rejected.
  void validate(double rabi_hz = 2.5e6, double selectivity_margin = 4.0) const {
    std::array<bool, 4> seen{};
    for (int a : target_axis) {
      if (a < 1 || a > 4) throw ValidationError("ChannelAssignment: target axis must be in 1..4");
      if (seen[static_cast<std::size_t>(a - 1)]) {
        throw ValidationError("ChannelAssignment: each axis must be targeted exactly once");
      }
      seen[static_cast<std::size_t>(a - 1)] = true;
    }
    const double margin = selectivity_margin * rabi_hz;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = i + 1; j < 4; ++j) {
        if (std::abs(carrier_hz[i] - carrier_hz[j]) < margin) {
          throw ValidationError("ChannelAssignment: carriers for channels " +
                                std::to_string(i + 1) + " and " + std::to_string(j + 1) +
                                " closer than the selectivity margin");
        }
      }
    }
  }

  // Channel driving the given axis (1-based both ways).
  int channel_for_axis(int axis_index) const {
    for (std::size_t c = 0; c < 4; ++c) {
      if (target_axis[c] == axis_index) return static_cast<int>(c + 1);
    }
    throw ValidationError("ChannelAssignment: no channel targets axis " +
                          std::to_string(axis_index));
  }
};

enum class PulseAngle { half_pi, pi };

struct PulseEvent {
  double start_s = 0.0;
  double duration_s = 0.0;
  PulseAngle nominal_angle = PulseAngle::half_pi;
  std::vector<int> channels;      // ascending, 1..4
  std::vector<double> phase_rad;  // aligned with channels, in [0, 2 pi)

  double end_s() const { return start_s + duration_s; }
  double phase_for_channel(int ch) const {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (channels[i] == ch) return phase_rad[i];
    }
    throw ValidationError("PulseEvent: channel " + std::to_string(ch) + " not in event");
  }
};

struct SingleFrequencyMode {
  int axis_index = 1;  // NV1..NV4
};
struct MultiFrequencyMode {
  Component component = Component::z;
};
using SequenceMode = std::variant<SingleFrequencyMode, MultiFrequencyMode>;

inline std::string mode_name(const SequenceMode& mode) {
  if (const auto* s = std::get_if<SingleFrequencyMode>(&mode)) {
    return "single_frequency(NV" + std::to_string(s->axis_index) + ")";
  }
  return std::string("multi_frequency(") +
         component_name(std::get<MultiFrequencyMode>(mode).component) + ")";
}

// Inverse of mode_name: "multi_frequency(x)" or "single_frequency(NV2)".
inline SequenceMode parse_mode_token(const std::string& token) {
  for (Component k : {Component::x, Component::y, Component::z}) {
    if (token == std::string("multi_frequency(") + component_name(k) + ")") {
      return MultiFrequencyMode{k};
    }
  }
  for (int a = 1; a <= 4; ++a) {
    if (token == "single_frequency(NV" + std::to_string(a) + ")") {
      return SingleFrequencyMode{a};
    }
  }
  throw ValidationError("unknown sequence mode '" + token + "'");
}

namespace detail {

inline double normalize_phase(double rad) {
  const double two_pi = 2.0 * std::numbers::pi;
  double out = std::fmod(rad, two_pi);
  if (out < 0) out += two_pi;
  // fmod can land exactly on 2 pi after the wrap for inputs just below 0.
  if (out >= two_pi) out = 0.0;
  return out;
}

// Phases are equal modulo 2 pi within tolerance.
inline bool phase_equal(double a, double b, double tol = 1e-9) {
  const double d = normalize_phase(a - b);
  return d <= tol || d >= 2.0 * std::numbers::pi - tol;
}

}  // namespace detail

// A complete three-pulse Hahn-echo program. Phases are hardware pulse
// phases: a readout flip shows up as a pi offset of the final pulse
// relative to the first; the simulation's quadrature operating point is a
// separate readout-phase convention, not part of the program.
struct SequenceProgram {
  double tau_s = 0.0;  // free evolution, end of first pulse to start of last
  SequenceMode mode = MultiFrequencyMode{};
  std::vector<PulseEvent> events;  // ordered by start time

  // Channel-to-axis mapping defaults to the identity (channel n drives NVn),
  // which is also what the text format assumes.
  void validate(const ChannelAssignment& channels = ChannelAssignment{}) const;

  // Readout sign per axis (array position = NV label - 1), derived from the
  // final-pulse phase relative to the first: a pi offset marks a flip.
  // Axes not driven get +1.
  std::array<int, 4> readout_signs(const ChannelAssignment& channels) const {
    std::array<int, 4> signs = {+1, +1, +1, +1};
    const PulseEvent& first = events.front();
    const PulseEvent& last = events.back();
    for (std::size_t i = 0; i < last.channels.size(); ++i) {
      const int ch = last.channels[i];
      const int axis = channels.target_axis[static_cast<std::size_t>(ch - 1)];
      const double rel = last.phase_rad[i] - first.phase_for_channel(ch);
      const bool flipped = detail::phase_equal(rel, std::numbers::pi);
      signs[static_cast<std::size_t>(axis - 1)] = flipped ? -1 : +1;
    }
    return signs;
  }

  // Axes that actually receive drive (1-based labels, ascending).
  std::vector<int> active_axes(const ChannelAssignment& channels) const {
    std::vector<int> axes;
    for (int ch : events.front().channels) {
      axes.push_back(channels.target_axis[static_cast<std::size_t>(ch - 1)]);
    }
    std::sort(axes.begin(), axes.end());
    return axes;
  }
};

inline void SequenceProgram::validate(const ChannelAssignment& channels) const {
  if (!(tau_s > 0)) throw ValidationError("SequenceProgram: tau must be positive");
  if (events.size() != 3) {
    throw ValidationError("SequenceProgram: expected exactly three pulse events, got " +
                          std::to_string(events.size()));
  }
  const std::array<PulseAngle, 3> expect = {PulseAngle::half_pi, PulseAngle::pi,
                                            PulseAngle::half_pi};
  for (std::size_t i = 0; i < 3; ++i) {
    const PulseEvent& e = events[i];
    if (e.nominal_angle != expect[i]) {
      throw ValidationError("SequenceProgram: pulse order must be pi/2, pi, pi/2");
    }
    if (!(e.duration_s > 0)) throw ValidationError("SequenceProgram: pulse duration must be > 0");
    if (e.channels.empty() || e.channels.size() != e.phase_rad.size()) {
      throw ValidationError("SequenceProgram: channel/phase lists must align and be non-empty");
    }
    for (std::size_t c = 0; c < e.channels.size(); ++c) {
      if (e.channels[c] < 1 || e.channels[c] > 4) {
        throw ValidationError("SequenceProgram: channels must be in 1..4");
      }
      if (c > 0 && e.channels[c] <= e.channels[c - 1]) {
        throw ValidationError("SequenceProgram: channels must be strictly ascending");
      }
      if (!(e.phase_rad[c] >= 0) || e.phase_rad[c] >= 2.0 * std::numbers::pi) {
        throw ValidationError("SequenceProgram: phases must lie in [0, 2 pi)");
      }
    }
  }
  // Per-channel overlap: with one shared timeline, any interval overlap of
  // events sharing a channel is a conflict; the three echo pulses share
  // channels, so just require strict ordering with gaps.
  for (std::size_t i = 0; i + 1 < events.size(); ++i) {
    if (events[i + 1].start_s < events[i].end_s() - 1e-15 * tau_s) {
      throw InvalidTiming("SequenceProgram: pulse events overlap");
    }
  }
  // Echo timing: free evolution runs from the end of the first pulse to the
  // start of the last; the pi pulse must sit at its midpoint, which is also
  // tau/2 past the end of the first pulse.
  const double free_start = events[0].end_s();
  const double free_end = events[2].start_s;
  if (std::abs((free_end - free_start) - tau_s) > 1e-12 * tau_s) {
    throw InvalidTiming("SequenceProgram: free evolution span does not equal tau");
  }
  const double pi_mid = events[1].start_s + 0.5 * events[1].duration_s;
  if (std::abs(pi_mid - 0.5 * (free_start + free_end)) > 1e-12 * tau_s) {
    throw InvalidTiming("SequenceProgram: pi pulse is not centered in the free evolution");
  }
  // Mode-specific checks: the final pulse implements the component's sign
  // pattern (multi) or drives a single channel (single).
  const PulseEvent& first = events.front();
  const PulseEvent& last = events.back();
  if (first.channels != last.channels || first.channels != events[1].channels) {
    throw ValidationError("SequenceProgram: all three pulses must drive the same channels");
  }
  if (std::holds_alternative<SingleFrequencyMode>(mode)) {
    if (first.channels.size() != 1) {
      throw ValidationError("SequenceProgram: single-frequency mode must drive one channel");
    }
  } else {
    const auto& mf = std::get<MultiFrequencyMode>(mode);
    if (first.channels.size() != 4) {
      throw ValidationError("SequenceProgram: multi-frequency mode must drive all four channels");
    }
    const SignPattern pattern = sign_pattern(mf.component);
    for (std::size_t i = 0; i < last.channels.size(); ++i) {
      const int ch = last.channels[i];
      const int axis = channels.target_axis[static_cast<std::size_t>(ch - 1)];
      const double rel = last.phase_rad[i] - first.phase_for_channel(ch);
      const double want =
          pattern.signs[static_cast<std::size_t>(axis - 1)] < 0 ? std::numbers::pi : 0.0;
      if (!detail::phase_equal(rel, want)) {
        throw ValidationError(
            "SequenceProgram: final-pulse phases do not match the component sign pattern");
      }
    }
  }
}

// Builds the canonical three-pulse echo program. Pulse durations come from
// the drive's Rabi frequency; the first pulse starts at t = 0 and the free
// evolution tau is measured from its end to the start of the final pulse.
inline SequenceProgram build_echo_sequence(const SequenceMode& mode, double tau_s,
                                           const DriveConfig& drive,
                                           const ChannelAssignment& channels) {
  drive.validate();
  if (!(tau_s > 0)) throw ValidationError("build_echo_sequence: tau must be positive");
  const double d_pi = drive.pi_duration_s();
  const double d_half = 0.5 * d_pi;
  if (!(tau_s > 2 * d_pi)) {
    throw InvalidTiming("build_echo_sequence: tau must exceed twice the pi duration");
  }

  std::vector<int> chs;
  std::vector<double> base_phase;
  std::array<int, 4> signs = {+1, +1, +1, +1};
  if (const auto* s = std::get_if<SingleFrequencyMode>(&mode)) {
    chs = {channels.channel_for_axis(s->axis_index)};
    base_phase = {0.0};
  } else {
    const auto& mf = std::get<MultiFrequencyMode>(mode);
    signs = sign_pattern(mf.component).signs;
    chs = {1, 2, 3, 4};
    base_phase = {0.0, 0.0, 0.0, 0.0};
  }

  auto event = [&](double start, double dur, PulseAngle angle,
                   const std::vector<double>& phases) {
    PulseEvent e;
    e.start_s = start;
    e.duration_s = dur;
    e.nominal_angle = angle;
    e.channels = chs;
    e.phase_rad = phases;
    return e;
  };

  std::vector<double> readout_phase;
  for (int ch : chs) {
    const int axis = channels.target_axis[static_cast<std::size_t>(ch - 1)];
    readout_phase.push_back(signs[static_cast<std::size_t>(axis - 1)] < 0 ? std::numbers::pi
                                                                          : 0.0);
  }

  SequenceProgram program;
  program.tau_s = tau_s;
  program.mode = mode;
  program.events.push_back(event(0.0, d_half, PulseAngle::half_pi, base_phase));
  program.events.push_back(
      event(d_half + 0.5 * tau_s - 0.5 * d_pi, d_pi, PulseAngle::pi, base_phase));
  program.events.push_back(event(d_half + tau_s, d_half, PulseAngle::half_pi, readout_phase));
  program.validate(channels);
  return program;
}

// Canonical text form: header `seq v1 tau=<s> mode=<mode>`, one line per
// pulse ordered by start time, channels ascending within each pulse.
inline std::string serialize_sequence(const SequenceProgram& program) {
  std::string out = "seq v1 tau=" + detail::format_double(program.tau_s) +
                    " mode=" + mode_name(program.mode) + "\n";
  std::vector<PulseEvent> events = program.events;
  std::stable_sort(events.begin(), events.end(),
                   [](const PulseEvent& a, const PulseEvent& b) { return a.start_s < b.start_s; });
  for (const PulseEvent& e : events) {
    out += "pulse t=" + detail::format_double(e.start_s) +
           " dur=" + detail::format_double(e.duration_s) +
           " angle=" + (e.nominal_angle == PulseAngle::pi ? "pi" : "pi/2") + " ch=";
    std::vector<std::size_t> order(e.channels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return e.channels[a] < e.channels[b]; });
    for (std::size_t i = 0; i < order.size(); ++i) {
      out += (i ? "," : "") + std::to_string(e.channels[order[i]]);
    }
    out += " phase=";
    for (std::size_t i = 0; i < order.size(); ++i) {
      out += (i ? "," : "") + detail::format_double(e.phase_rad[order[i]]);
    }
    out += "\n";
  }
  return out;
}

// Parses the documented line format. Phases outside [0, 2 pi) are
// normalized with a warning appended to `warnings` (when given). The parsed
// program is fully validated before being returned.
inline SequenceProgram parse_sequence(const std::string& text,
                                      std::vector<std::string>* warnings = nullptr) {
  SequenceProgram program;
  bool have_header = false;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto field = [&](std::string_view token, std::string_view key, int col) -> std::string_view {
    if (token.size() < key.size() + 1 || token.substr(0, key.size()) != key ||
        token[key.size()] != '=') {
      throw ParseError("expected '" + std::string(key) + "=...'", line_no, col);
    }
    return token.substr(key.size() + 1);
  };

  while (std::getline(in, line)) {
    ++line_no;
    // Strip comments and surrounding whitespace.
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::vector<std::pair<std::string, int>> tokens;  // token, 1-based column
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
      const std::size_t start = pos;
      while (pos < line.size() && !std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
      if (pos > start) tokens.emplace_back(line.substr(start, pos - start), static_cast<int>(start + 1));
    }
    if (tokens.empty()) continue;

    if (!have_header) {
      if (tokens[0].first != "seq") throw ParseError("file must start with 'seq'", line_no, tokens[0].second);
      if (tokens.size() != 4 || tokens[1].first != "v1") {
        throw ParseError("expected header 'seq v1 tau=<s> mode=<mode>'", line_no, tokens[0].second);
      }
      program.tau_s =
          detail::parse_double_token(field(tokens[2].first, "tau", tokens[2].second),
                                     line_no, tokens[2].second);
      const std::string mode(field(tokens[3].first, "mode", tokens[3].second));
      try {
        program.mode = parse_mode_token(mode);
      } catch (const ValidationError&) {
        throw ParseError("unknown mode '" + mode + "'", line_no, tokens[3].second);
      }
      have_header = true;
      continue;
    }

    if (tokens[0].first != "pulse") {
      throw ParseError("expected 'pulse' record", line_no, tokens[0].second);
    }
    if (tokens.size() != 6) {
      throw ParseError("pulse record needs t=, dur=, angle=, ch=, phase=", line_no,
                       tokens[0].second);
    }
    PulseEvent e;
    e.start_s = detail::parse_double_token(field(tokens[1].first, "t", tokens[1].second),
                                           line_no, tokens[1].second);
    e.duration_s = detail::parse_double_token(field(tokens[2].first, "dur", tokens[2].second),
                                              line_no, tokens[2].second);
    const std::string_view angle = field(tokens[3].first, "angle", tokens[3].second);
    if (angle == "pi") {
      e.nominal_angle = PulseAngle::pi;
    } else if (angle == "pi/2") {
      e.nominal_angle = PulseAngle::half_pi;
    } else {
      throw ParseError("angle must be 'pi/2' or 'pi'", line_no, tokens[3].second);
    }
    auto split_list = [&](std::string_view list, int col, auto&& each) {
      std::size_t p = 0;
      while (p <= list.size()) {
        const std::size_t comma = std::min(list.find(',', p), list.size());
        each(list.substr(p, comma - p), col + static_cast<int>(p));
        p = comma + 1;
        if (comma == list.size()) break;
      }
    };
    split_list(field(tokens[4].first, "ch", tokens[4].second), tokens[4].second,
               [&](std::string_view item, int col) {
                 int ch = 0;
                 const auto res = std::from_chars(item.data(), item.data() + item.size(), ch);
                 if (res.ec != std::errc{} || res.ptr != item.data() + item.size()) {
                   throw ParseError("bad channel '" + std::string(item) + "'", line_no, col);
                 }
                 e.channels.push_back(ch);
               });
    split_list(field(tokens[5].first, "phase", tokens[5].second), tokens[5].second,
               [&](std::string_view item, int col) {
                 double rad = detail::parse_double_token(item, line_no, col);
                 const double norm = detail::normalize_phase(rad);
                 if (norm != rad) {
                   if (warnings) {
                     warnings->push_back("line " + std::to_string(line_no) + ": phase " +
                                         detail::format_double(rad) + " normalized to " +
                                         detail::format_double(norm));
                   }
                   rad = norm;
                 }
                 e.phase_rad.push_back(rad);
               });
    if (e.channels.size() != e.phase_rad.size()) {
      throw ParseError("ch and phase lists must have the same length", line_no, tokens[4].second);
    }
    program.events.push_back(std::move(e));
  }
  if (!have_header) throw ParseError("missing 'seq v1' header", 1, 1);
  std::stable_sort(program.events.begin(), program.events.end(),
                   [](const PulseEvent& a, const PulseEvent& b) { return a.start_s < b.start_s; });
  program.validate();
  return program;
}

struct TopologyOptions {
  // Channels come in two source pairs; within one event the two channels of
  // a pair can only differ in phase by 0 or pi (sideband flip).
  std::array<std::array<int, 2>, 2> source_pairs = {{{1, 2}, {3, 4}}};
  // With strict phase granularity only multiples of pi/2 are realizable
  // (IQ switching); set false to allow arbitrary phases.
  bool strict = true;
};

// Advisory hardware-realizability check; returns human-readable violations
// (empty means realizable).
inline std::vector<std::string> validate_against_topology(const SequenceProgram& program,
                                                          const ChannelAssignment& channels,
                                                          const TopologyOptions& opt = {}) {
  (void)channels;
  std::vector<std::string> violations;
  const double quarter = 0.5 * std::numbers::pi;
  for (std::size_t ei = 0; ei < program.events.size(); ++ei) {
    const PulseEvent& e = program.events[ei];
    if (opt.strict) {
      for (std::size_t i = 0; i < e.phase_rad.size(); ++i) {
        const double steps = e.phase_rad[i] / quarter;
        if (std::abs(steps - std::round(steps)) > 1e-9) {
          violations.push_back("event " + std::to_string(ei + 1) + ": channel " +
                               std::to_string(e.channels[i]) +
                               " phase is not a multiple of pi/2");
        }
      }
    }
    for (const auto& pair : opt.source_pairs) {
      double phase[2];
      int found = 0;
      for (int side = 0; side < 2; ++side) {
        for (std::size_t i = 0; i < e.channels.size(); ++i) {
          if (e.channels[i] == pair[static_cast<std::size_t>(side)]) {
            phase[found++] = e.phase_rad[i];
          }
        }
      }
      if (found == 2) {
        const double rel = detail::normalize_phase(phase[1] - phase[0]);
        const bool ok = rel <= 1e-9 || std::abs(rel - std::numbers::pi) <= 1e-9 ||
                        rel >= 2 * std::numbers::pi - 1e-9;
        if (!ok) {
          violations.push_back("event " + std::to_string(ei + 1) + ": channels " +
                               std::to_string(pair[0]) + "," + std::to_string(pair[1]) +
                               " share a source but need a non-180-degree relative phase");
        }
      }
    }
  }
  return violations;
}

}  // namespace nvsense
