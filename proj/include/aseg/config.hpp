#pragma once

// Flat `key = value` run configuration. Every key has a default, and the resolved snapshot
// written by to_text() parses back to an identical config.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "aseg/agent.hpp"
#include "aseg/model.hpp"
#include "aseg/policy.hpp"
#include "aseg/retina.hpp"

namespace aseg {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string dataset = "synthetic";  // synthetic | folder
  std::string images_dir;
  std::string labels_dir;
  int num_samples = 64;  // synthetic scenes generated
  int num_classes = 7;
  int image_height = 128;
  int image_width = 256;
  int glimpse_size = 48;
  int retina_scales = 3;
  int num_glimpses = 10;
  std::string agent = "glimpse_only";
  std::string policy = "uncertainty";
  int overview_size = 0;
  double lr = 1e-3;
  int batch_size = 8;
  int epochs = 10;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  double val_fraction = 0.25;
  double horizon_band = 1.0 / 3.0;
  int restricted_radius_px = 48;

  ArchConfig arch() const {
    ArchConfig a;
    a.image_height = image_height;
    a.image_width = image_width;
    a.glimpse_size = glimpse_size;
    a.num_classes = num_classes;
    a.overview_size = overview_size;
    return a;
  }

  AgentConfig agent_config() const {
    AgentConfig c;
    c.kind = parse_agent(agent);
    c.steps = c.kind == AgentKind::scale_only ? 0 : num_glimpses;
    c.policy.kind = parse_policy(policy);
    c.policy.horizon_band = horizon_band;
    c.policy.restricted_radius_px = restricted_radius_px;
    c.retina = RetinaConfig::with_scales(retina_scales, glimpse_size);
    return c;
  }

  /// Throws ConfigError naming the first inconsistent key.
  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (dataset != "synthetic" && dataset != "folder") fail("dataset must be synthetic or folder");
    if (dataset == "folder" && (images_dir.empty() || labels_dir.empty())) {
      fail("dataset = folder needs images_dir and labels_dir");
    }
    if (num_samples < 2) fail("num_samples must be >= 2");
    if (num_glimpses < 0) fail("num_glimpses must be >= 0");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (epochs < 0) fail("epochs must be >= 0");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail("val_fraction must lie in (0, 1)");
    try {
      arch().validate();
      validate_agent(agent_config(), arch());
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }

  std::string to_text() const;
  bool operator==(const RunConfig&) const = default;
};

namespace detail {

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
  V v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("bad value '" + text + "' for key " + key);
  }
  return v;
}

template <typename V>
std::string format_number(V v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename V>
Field number_field(const std::string& key, V RunConfig::*member) {
  return {[member](const RunConfig& c) { return format_number(c.*member); },
          [key, member](RunConfig& c, const std::string& s) { c.*member = parse_number<V>(key, s); }};
}

inline Field text_field(std::string RunConfig::*member) {
  return {[member](const RunConfig& c) { return c.*member; },
          [member](RunConfig& c, const std::string& s) { c.*member = s; }};
}

/// Keys in snapshot order.
inline const std::vector<std::pair<std::string, Field>>& config_fields() {
  static const std::vector<std::pair<std::string, Field>> fields = {
      {"dataset", text_field(&RunConfig::dataset)},
      {"images_dir", text_field(&RunConfig::images_dir)},
      {"labels_dir", text_field(&RunConfig::labels_dir)},
      {"num_samples", number_field("num_samples", &RunConfig::num_samples)},
      {"num_classes", number_field("num_classes", &RunConfig::num_classes)},
      {"image_height", number_field("image_height", &RunConfig::image_height)},
      {"image_width", number_field("image_width", &RunConfig::image_width)},
      {"glimpse_size", number_field("glimpse_size", &RunConfig::glimpse_size)},
      {"retina_scales", number_field("retina_scales", &RunConfig::retina_scales)},
      {"num_glimpses", number_field("num_glimpses", &RunConfig::num_glimpses)},
      {"agent", text_field(&RunConfig::agent)},
      {"policy", text_field(&RunConfig::policy)},
      {"overview_size", number_field("overview_size", &RunConfig::overview_size)},
      {"lr", number_field("lr", &RunConfig::lr)},
      {"batch_size", number_field("batch_size", &RunConfig::batch_size)},
      {"epochs", number_field("epochs", &RunConfig::epochs)},
      {"seed", number_field("seed", &RunConfig::seed)},
      {"out_dir", text_field(&RunConfig::out_dir)},
      {"val_fraction", number_field("val_fraction", &RunConfig::val_fraction)},
      {"horizon_band", number_field("horizon_band", &RunConfig::horizon_band)},
      {"restricted_radius_px", number_field("restricted_radius_px", &RunConfig::restricted_radius_px)},
  };
  return fields;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : detail::config_fields()) keys.push_back(k);
  return keys;
}

/// Sets one key from its textual value; unknown keys are errors.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [k, f] : detail::config_fields()) {
    if (k == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  for (const auto& [k, f] : detail::config_fields()) {
    if (k == key) return f.get(cfg);
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : detail::config_fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

/// Applies `key = value` lines on top of `base`. '#' starts a comment.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return base;
}

inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  return parse_config(in, std::move(base));
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

}  // namespace aseg
