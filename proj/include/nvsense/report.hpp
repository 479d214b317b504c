#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nvsense/errors.hpp"
#include "nvsense/experiments.hpp"
#include "nvsense/textformat.hpp"
#include "nvsense/version.hpp"

namespace nvsense {

using ordered_json = nlohmann::ordered_json;

// All file output is deterministic: shortest round-trip decimals, fixed key
// order, no timestamps.

struct OutputContext {
  std::string config_hash;
  std::uint64_t seed = 0;
  bool has_seed = false;
};

inline std::string csv_preamble(const OutputContext& ctx) {
  std::string line = "# tool=";
  line += kToolName;
  line += " version=";
  line += kToolVersion;
  line += " config_hash=" + (ctx.config_hash.empty() ? std::string("none") : ctx.config_hash);
  line += " seed=" + (ctx.has_seed ? std::to_string(ctx.seed) : std::string("none"));
  line += "\n";
  return line;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path.string());
  out << content;
  if (!out) throw Error("failed writing file: " + path.string());
}

// One sweep as CSV: comment preamble, header row, then one row per point.
inline void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep,
                            const OutputContext& ctx) {
  std::string body = csv_preamble(ctx);
  body += "# mode=" + sweep.meta.mode + "\n";
  body += sweep.meta.x_name + ",mean,stddev,counts\n";
  for (std::size_t i = 0; i < sweep.x.size(); ++i) {
    body += detail::format_double(sweep.x[i]);
    body += ',';
    body += detail::format_double(sweep.mean[i]);
    body += ',';
    body += detail::format_double(sweep.sigma[i]);
    body += ',';
    body += std::to_string(sweep.counts[i]);
    body += '\n';
  }
  write_text_file(path, body);
}

inline ordered_json json_header(const OutputContext& ctx) {
  ordered_json j;
  j["tool"] = std::string(kToolName);
  j["version"] = std::string(kToolVersion);
  j["config_hash"] = ctx.config_hash.empty() ? "none" : ctx.config_hash;
  if (ctx.has_seed) {
    j["seed"] = ctx.seed;
  } else {
    j["seed"] = nullptr;
  }
  return j;
}

inline void write_json_file(const std::filesystem::path& path, const ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace nvsense
