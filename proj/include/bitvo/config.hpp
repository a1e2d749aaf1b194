#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "bitvo/descriptor.hpp"
#include "bitvo/error.hpp"
#include "bitvo/pipeline.hpp"

namespace bitvo {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    fail(Errc::parse_error, "config key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    fail(Errc::parse_error, "config key '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

}  // namespace detail

/// Applies one key=value setting. Unknown keys are errors.
inline void apply_config_value(VoConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_double;
  using detail::parse_int;
  if (key == "tau") cfg.robust.tau = parse_double(key, value);
  else if (key == "max_iterations") cfg.robust.max_iterations = parse_int(key, value);
  else if (key == "rel_tol") cfg.robust.rel_tol = parse_double(key, value);
  else if (key == "freeze_sigma") cfg.robust.freeze_sigma = parse_int(key, value) != 0;
  else if (key == "sigma_floor") cfg.robust.sigma_floor = parse_double(key, value);
  else if (key == "sigma_pre") cfg.descriptor.sigma_pre = parse_double(key, value);
  else if (key == "sigma_channel") cfg.descriptor.sigma_channel = parse_double(key, value);
  else if (key == "mode") cfg.descriptor.mode = parse_descriptor_mode(value);
  else if (key == "selection_min_width") cfg.selection.min_width = parse_int(key, value);
  else if (key == "selection_min_height") cfg.selection.min_height = parse_int(key, value);
  else if (key == "keyframe_translation") cfg.keyframe.motion_threshold_trans = parse_double(key, value);
  else if (key == "keyframe_rotation_deg")
    cfg.keyframe.motion_threshold_rot = parse_double(key, value) * std::numbers::pi / 180.0;
  else if (key == "good_fraction_min") cfg.keyframe.good_fraction_min = parse_double(key, value);
  else if (key == "good_percentile") cfg.keyframe.good_percentile = parse_double(key, value);
  else fail(Errc::parse_error, "unknown config key '" + key + "'");
}

inline void validate_config(const VoConfig& cfg) {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(Errc::invalid_argument, std::string("invalid config: ") + what);
  };
  require(cfg.robust.tau > 0.0, "tau must be > 0");
  require(cfg.robust.max_iterations >= 1, "max_iterations must be >= 1");
  require(cfg.robust.rel_tol >= 0.0, "rel_tol must be >= 0");
  require(cfg.robust.sigma_floor > 0.0, "sigma_floor must be > 0");
  require(cfg.descriptor.sigma_pre >= 0.0, "sigma_pre must be >= 0");
  require(cfg.descriptor.sigma_channel >= 0.0, "sigma_channel must be >= 0");
  require(cfg.selection.min_width >= 0 && cfg.selection.min_height >= 0, "selection thresholds must be >= 0");
  require(cfg.keyframe.motion_threshold_trans > 0.0, "keyframe_translation must be > 0");
  require(cfg.keyframe.motion_threshold_rot > 0.0, "keyframe_rotation_deg must be > 0");
  require(cfg.keyframe.good_fraction_min >= 0.0 && cfg.keyframe.good_fraction_min <= 1.0,
          "good_fraction_min must be in [0, 1]");
  require(cfg.keyframe.good_percentile > 0.0 && cfg.keyframe.good_percentile <= 1.0,
          "good_percentile must be in (0, 1]");
}

/// Parses "key = value" lines ('#' comments) on top of `base`.
inline VoConfig parse_config(const std::string& text, VoConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(Errc::parse_error, "config line " + std::to_string(lineno) + " is not key=value");
    apply_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  validate_config(base);
  return base;
}

inline VoConfig read_config(const std::filesystem::path& path, VoConfig base = {}) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace bitvo
