#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mapex/baselines.hpp"
#include "mapex/env.hpp"
#include "mapex/errors.hpp"
#include "mapex/extraction.hpp"
#include "mapex/oracle.hpp"

namespace mapex {

// --- Key registry ---
//
// Plain-text key=value configuration with one section per module. Every key
// is registered with a type and default; unknown keys are rejected with the
// offending key and line. Values are stored canonicalized so the digest of a
// config is stable across formatting differences.

enum class KeyType { Int, Real, Bool, Str, Seeds };

struct KeySpec {
  KeyType type = KeyType::Str;
  std::string def;
  std::vector<std::string> choices;  // non-empty: enumerated string values
};

inline const std::map<std::string, KeySpec>& config_registry() {
  static const std::map<std::string, KeySpec> reg = {
      {"run.algorithm",
       {KeyType::Str, "maviper",
        {"maviper", "iviper", "viper", "imitation", "fitted_q"}}},
      {"run.seeds", {KeyType::Seeds, "0", {}}},
      {"run.out_dir", {KeyType::Str, "", {}}},
      {"env.kind",
       {KeyType::Str, "physical_deception",
        {"physical_deception", "cooperative_navigation", "predator_prey"}}},
      {"env.grid_size", {KeyType::Int, "5", {}}},
      {"env.horizon", {KeyType::Int, "25", {}}},
      {"env.defenders", {KeyType::Int, "2", {}}},
      {"env.agents", {KeyType::Int, "3", {}}},
      {"env.predators", {KeyType::Int, "2", {}}},
      {"env.prey", {KeyType::Int, "1", {}}},
      {"env.epsilon_cells", {KeyType::Int, "0", {}}},
      {"env.discount", {KeyType::Real, "0.95", {}}},
      {"env.seed", {KeyType::Int, "0", {}}},
      {"oracle.mc_samples", {KeyType::Int, "16", {}}},
      {"oracle.enumeration_cap", {KeyType::Int, "64", {}}},
      {"oracle.cache", {KeyType::Bool, "1", {}}},
      {"extraction.iterations", {KeyType::Int, "30", {}}},
      {"extraction.rollouts_per_iter", {KeyType::Int, "25", {}}},
      {"extraction.max_depth", {KeyType::Int, "4", {}}},
      {"extraction.threshold", {KeyType::Int, "-1", {}}},
      {"extraction.resampling",
       {KeyType::Str, "maviper_expected",
        {"uniform", "viper_single", "iviper_centralized", "maviper_expected"}}},
      {"extraction.prediction_module", {KeyType::Bool, "1", {}}},
      {"extraction.max_samples", {KeyType::Int, "30000", {}}},
      {"extraction.eval_episodes_for_selection", {KeyType::Int, "30", {}}},
      {"extraction.min_samples_split", {KeyType::Real, "2", {}}},
      {"extraction.criterion", {KeyType::Str, "gini", {"gini", "entropy"}}},
      {"extraction.early_stop_patience", {KeyType::Int, "0", {}}},
      {"extraction.extract_team", {KeyType::Int, "-1", {}}},
      {"imitation.n_samples", {KeyType::Int, "30000", {}}},
      {"fitted_q.n_samples", {KeyType::Int, "30000", {}}},
      {"fitted_q.q_iterations", {KeyType::Int, "10", {}}},
      {"eval.episodes", {KeyType::Int, "100", {}}},
      {"eval.seeds", {KeyType::Seeds, "0", {}}},
      {"eval.state_cap", {KeyType::Int, "2000000", {}}},
  };
  return reg;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string canonical_value(const std::string& key, const KeySpec& spec,
                                   const std::string& raw, int line) {
  std::string where = line > 0 ? " (line " + std::to_string(line) + ")" : "";
  std::string v = trim(raw);
  switch (spec.type) {
    case KeyType::Int: {
      try {
        std::size_t pos = 0;
        long long n = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return std::to_string(n);
      } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' needs an integer, got '" + v + "'" +
                          where);
      }
    }
    case KeyType::Real: {
      try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return nlohmann::json(d).dump();
      } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' needs a number, got '" + v + "'" +
                          where);
      }
    }
    case KeyType::Bool: {
      if (v == "1" || v == "true" || v == "on" || v == "yes") return "1";
      if (v == "0" || v == "false" || v == "off" || v == "no") return "0";
      throw ConfigError("key '" + key + "' needs a boolean, got '" + v + "'" + where);
    }
    case KeyType::Seeds: {
      std::vector<std::uint64_t> seeds;
      std::string canon;
      std::stringstream ss(v);
      std::string part;
      while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) continue;
        try {
          std::size_t pos = 0;
          unsigned long long n = std::stoull(part, &pos);
          if (pos != part.size()) throw std::invalid_argument(part);
          if (!canon.empty()) canon += ",";
          canon += std::to_string(n);
          seeds.push_back(n);
        } catch (const std::exception&) {
          throw ConfigError("key '" + key + "' needs a comma-separated seed list, got '" +
                            v + "'" + where);
        }
      }
      if (seeds.empty())
        throw ConfigError("key '" + key + "' needs at least one seed" + where);
      return canon;
    }
    case KeyType::Str: {
      if (!spec.choices.empty()) {
        for (const std::string& c : spec.choices)
          if (v == c) return v;
        std::string opts;
        for (const std::string& c : spec.choices) opts += (opts.empty() ? "" : ", ") + c;
        throw ConfigError("key '" + key + "' must be one of {" + opts + "}, got '" +
                          v + "'" + where);
      }
      return v;
    }
  }
  return v;
}

}  // namespace detail

class Config {
 public:
  static Config defaults() {
    Config c;
    for (const auto& [key, spec] : config_registry())
      c.values_[key] = detail::canonical_value(key, spec, spec.def, 0);
    return c;
  }

  static Config from_text(const std::string& text) {
    Config c = defaults();
    std::stringstream ss(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(ss, line)) {
      ++lineno;
      std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw ConfigError("malformed section header at line " +
                            std::to_string(lineno));
        section = detail::trim(t.substr(1, t.size() - 2));
        continue;
      }
      std::size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError("expected key=value at line " + std::to_string(lineno));
      std::string key = detail::trim(t.substr(0, eq));
      if (section.empty())
        throw ConfigError("key '" + key + "' outside any section at line " +
                          std::to_string(lineno));
      c.set(section + "." + key, t.substr(eq + 1), lineno);
    }
    return c;
  }

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
  }

  // Parses the flat section.key=value form emitted by canonical().
  static Config from_canonical(const std::string& text) {
    Config c = defaults();
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
      ++lineno;
      std::string t = detail::trim(line);
      if (t.empty()) continue;
      std::size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError("expected key=value at line " + std::to_string(lineno));
      c.set(detail::trim(t.substr(0, eq)), t.substr(eq + 1), lineno);
    }
    return c;
  }

  // Applies a "section.key=value" override.
  void apply_override(const std::string& assignment) {
    std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + assignment + "' is not of the form key=value");
    set(detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1), 0);
  }

  void set(const std::string& key, const std::string& raw, int line = 0) {
    auto it = config_registry().find(key);
    if (it == config_registry().end()) {
      std::string where = line > 0 ? " at line " + std::to_string(line) : "";
      throw ConfigError("unknown config key '" + key + "'" + where);
    }
    values_[key] = detail::canonical_value(key, it->second, raw, line);
  }

  const std::string& get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }
  int get_int(const std::string& key) const {
    return static_cast<int>(std::stoll(get_str(key)));
  }
  std::uint64_t get_u64(const std::string& key) const {
    long long v = std::stoll(get_str(key));
    return static_cast<std::uint64_t>(v);
  }
  double get_real(const std::string& key) const { return std::stod(get_str(key)); }
  bool get_bool(const std::string& key) const { return get_str(key) == "1"; }
  std::vector<std::uint64_t> get_seeds(const std::string& key) const {
    std::vector<std::uint64_t> out;
    std::stringstream ss(get_str(key));
    std::string part;
    while (std::getline(ss, part, ','))
      if (!part.empty()) out.push_back(std::stoull(part));
    return out;
  }

  // Sorted key=value lines; the identity the digest is computed over.
  std::string canonical() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
    return out;
  }

  std::string digest() const {
    std::uint64_t h = fnv1a64(canonical());
    static const char* hex = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
      s[i] = hex[h & 0xf];
      h >>= 4;
    }
    return s;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// --- Config to module structs ---

inline EnvConfig env_config_from(const Config& c) {
  EnvConfig e;
  e.kind = env_kind_from_name(c.get_str("env.kind"));
  e.grid_size = c.get_int("env.grid_size");
  e.horizon = c.get_int("env.horizon");
  e.roles["defenders"] = c.get_int("env.defenders");
  e.roles["agents"] = c.get_int("env.agents");
  e.roles["predators"] = c.get_int("env.predators");
  e.roles["prey"] = c.get_int("env.prey");
  e.seed = c.get_u64("env.seed");
  e.epsilon_cells = c.get_int("env.epsilon_cells");
  e.discount = c.get_real("env.discount");
  return e;
}

inline OracleConfig oracle_config_from(const Config& c) {
  OracleConfig o;
  o.mc_samples = c.get_int("oracle.mc_samples");
  o.enumeration_cap = c.get_int("oracle.enumeration_cap");
  o.cache = c.get_bool("oracle.cache");
  return o;
}

inline ExtractionConfig extraction_config_from(const Config& c) {
  ExtractionConfig x;
  x.iterations = c.get_int("extraction.iterations");
  x.rollouts_per_iter = c.get_int("extraction.rollouts_per_iter");
  x.max_depth = c.get_int("extraction.max_depth");
  x.threshold = c.get_int("extraction.threshold");
  x.resampling = resampling_from_name(c.get_str("extraction.resampling"));
  x.prediction_module = c.get_bool("extraction.prediction_module");
  x.max_samples = c.get_int("extraction.max_samples");
  x.eval_episodes_for_selection = c.get_int("extraction.eval_episodes_for_selection");
  x.min_samples_split = c.get_real("extraction.min_samples_split");
  x.criterion = c.get_str("extraction.criterion") == "entropy"
                    ? SplitCriterion::Entropy
                    : SplitCriterion::Gini;
  x.early_stop_patience = c.get_int("extraction.early_stop_patience");
  return x;
}

inline ImitationConfig imitation_config_from(const Config& c) {
  ImitationConfig i;
  i.n_samples = c.get_int("imitation.n_samples");
  i.max_depth = c.get_int("extraction.max_depth");
  i.min_samples_split = c.get_real("extraction.min_samples_split");
  i.criterion = c.get_str("extraction.criterion") == "entropy"
                    ? SplitCriterion::Entropy
                    : SplitCriterion::Gini;
  return i;
}

inline FqiConfig fqi_config_from(const Config& c) {
  FqiConfig f;
  f.n_samples = c.get_int("fitted_q.n_samples");
  f.q_iterations = c.get_int("fitted_q.q_iterations");
  f.max_depth = c.get_int("extraction.max_depth");
  f.min_samples_split = c.get_real("extraction.min_samples_split");
  return f;
}

// --- Run manifest ---
//
// Written into the run directory before any results, then rewritten with
// status "complete" and artifact checksums at the end, so interrupted runs
// are detectable.

struct RunManifest {
  std::string status = "running";
  std::string config_digest;
  std::string algorithm;
  std::string environment;
  int depth = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> outputs;             // artifact paths, run-dir relative
  std::map<std::string, std::string> checksums; // path -> fnv1a64 hex of bytes
  double wall_clock_seconds = 0.0;
};

inline std::string checksum_hex(const std::string& bytes) {
  std::uint64_t h = fnv1a64(bytes);
  static const char* hex = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = hex[h & 0xf];
    h >>= 4;
  }
  return s;
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json j;
  j["status"] = m.status;
  j["config_digest"] = m.config_digest;
  j["algorithm"] = m.algorithm;
  j["environment"] = m.environment;
  j["depth"] = m.depth;
  j["seeds"] = m.seeds;
  j["outputs"] = m.outputs;
  j["checksums"] = m.checksums;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.status = j.at("status").get<std::string>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.algorithm = j.at("algorithm").get<std::string>();
    m.environment = j.at("environment").get<std::string>();
    m.depth = j.at("depth").get<int>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.checksums = j.at("checksums").get<std::map<std::string, std::string>>();
    m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed run manifest: ") + e.what());
  }
}

}  // namespace mapex
