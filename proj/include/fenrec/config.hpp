#pragma once

// Hyperparameters and the flat key = value experiment configuration.
//
// Config file syntax: one `key = value` per line, `#` starts a comment, blank
// lines ignored. Unknown keys and malformed values are rejected. The resolved
// configuration is written back in the fixed key order of config_keys().

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fenrec/errors.hpp"
#include "fenrec/losses.hpp"

namespace fenrec {

struct HyperParams {
  // soft labels
  double gamma = 0.3;
  std::size_t horizon = 2;  // future items beyond the immediate next one
  // enduring negatives / contrastive loss
  double lambda = 0.3;
  double mu = 0.1;
  double margin = 0.2;
  double tau1 = 1.0;
  double tau2 = 8.0;
  double alpha = 0.1;
  std::size_t warmup_epochs = 20;
  // model and optimizer
  std::size_t batch_size = 256;
  std::size_t max_len = 50;
  std::size_t dim = 64;
  double dropout = 0.2;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 42;
  // ablation switches
  bool soft_labels_enabled = true;
  bool upweighting_enabled = true;
  bool mixing_enabled = true;
  bool export_histograms = true;

  ContrastiveConfig contrastive(std::size_t epoch) const {
    ContrastiveConfig c;
    c.tau1 = tau1;
    c.tau2 = tau2;
    c.mu = mu_at(epoch);
    c.margin = margin;
    c.upweighting_enabled = upweighting_enabled;
    c.mixing_enabled = mixing_enabled;
    return c;
  }

  /// Synthesized-negative weight in effect: zero during warm-up or when mixing is off.
  double mu_at(std::size_t epoch) const { return (!mixing_enabled || epoch < warmup_epochs) ? 0.0 : mu; }

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("lambda must lie in (0, 1)");
    if (!(mu >= 0.0)) throw ConfigError("mu must be non-negative");
    if (!(tau1 > 0.0) || !(tau2 > 0.0)) throw ConfigError("tau1 and tau2 must be positive");
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (max_len == 0 || dim == 0) throw ConfigError("max_len and dim must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      throw ConfigError("adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (patience == 0) throw ConfigError("patience must be positive");
  }
};

struct ExperimentConfig {
  HyperParams hp;
  std::string data;
  std::string out_dir = "runs/default";
  std::size_t min_len = 3;
};

namespace detail {

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError("'" + key + "': expected a number, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    if (!v.empty() && v[0] != '-') out = std::stoull(v, &pos, 10);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError("'" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + v + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline const std::vector<ConfigKey>& config_keys() {
  using detail::format_double;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto real = [&](const char* name, double HyperParams::*field) {
      k.push_back({name, [field](const ExperimentConfig& c) { return format_double(c.hp.*field); },
                   [field, name](ExperimentConfig& c, const std::string& v) {
                     c.hp.*field = detail::parse_double(name, v);
                   }});
    };
    auto count = [&](const char* name, std::size_t HyperParams::*field) {
      k.push_back({name, [field](const ExperimentConfig& c) { return std::to_string(c.hp.*field); },
                   [field, name](ExperimentConfig& c, const std::string& v) {
                     c.hp.*field = static_cast<std::size_t>(detail::parse_unsigned(name, v));
                   }});
    };
    auto flag = [&](const char* name, bool HyperParams::*field) {
      k.push_back({name, [field](const ExperimentConfig& c) { return std::string(c.hp.*field ? "true" : "false"); },
                   [field, name](ExperimentConfig& c, const std::string& v) {
                     c.hp.*field = detail::parse_bool(name, v);
                   }});
    };
    k.push_back({"data", [](const ExperimentConfig& c) { return c.data; },
                 [](ExperimentConfig& c, const std::string& v) { c.data = v; }});
    k.push_back({"out_dir", [](const ExperimentConfig& c) { return c.out_dir; },
                 [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; }});
    k.push_back({"min_len", [](const ExperimentConfig& c) { return std::to_string(c.min_len); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.min_len = static_cast<std::size_t>(detail::parse_unsigned("min_len", v));
                 }});
    k.push_back({"seed", [](const ExperimentConfig& c) { return std::to_string(c.hp.seed); },
                 [](ExperimentConfig& c, const std::string& v) { c.hp.seed = detail::parse_unsigned("seed", v); }});
    real("gamma", &HyperParams::gamma);
    count("horizon", &HyperParams::horizon);
    real("lambda", &HyperParams::lambda);
    real("mu", &HyperParams::mu);
    real("m", &HyperParams::margin);
    real("tau1", &HyperParams::tau1);
    real("tau2", &HyperParams::tau2);
    real("alpha", &HyperParams::alpha);
    count("warmup_epochs", &HyperParams::warmup_epochs);
    count("batch_size", &HyperParams::batch_size);
    count("max_len", &HyperParams::max_len);
    count("dim", &HyperParams::dim);
    real("dropout", &HyperParams::dropout);
    real("learning_rate", &HyperParams::learning_rate);
    real("adam_beta1", &HyperParams::adam_beta1);
    real("adam_beta2", &HyperParams::adam_beta2);
    real("adam_eps", &HyperParams::adam_eps);
    count("max_epochs", &HyperParams::max_epochs);
    count("patience", &HyperParams::patience);
    flag("soft_labels_enabled", &HyperParams::soft_labels_enabled);
    flag("upweighting_enabled", &HyperParams::upweighting_enabled);
    flag("mixing_enabled", &HyperParams::mixing_enabled);
    flag("export_histograms", &HyperParams::export_histograms);
    return k;
  }();
  return keys;
}

inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys())
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  throw ConfigError("unknown configuration key '" + key + "'");
}

inline std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) {
  for (const auto& k : config_keys())
    if (k.name == key) return k.get(cfg);
  throw ConfigError("unknown configuration key '" + key + "'");
}

/// Parses "KEY=VALUE" (as given to --set).
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not KEY=VALUE");
  set_config_value(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

inline void parse_config(std::istream& in, ExperimentConfig& cfg) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    try {
      set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  ExperimentConfig cfg;
  parse_config(in, cfg);
  return cfg;
}

/// Resolved configuration text. out_dir is left out: the file lives inside it.
inline std::string format_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  for (const auto& k : config_keys())
    if (k.name != "out_dir") out << k.name << " = " << k.get(cfg) << '\n';
  return out.str();
}

inline void write_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config '" + path + "'");
  out << format_config(cfg);
}

}  // namespace fenrec
