#pragma once

#include <cstdlib>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcqlab/io.hpp"

namespace bcqlab {

// Flat "key = value" experiment configuration. Every key must appear in the
// registry below; unknown keys and mistyped values are rejected at load time
// so a typo cannot silently fall back to a default.

enum class KeyType { integer, real, text, flag };

struct KeySpec {
  const char* name;
  KeyType type;
  const char* preset;  // textual default
};

inline const std::vector<KeySpec>& config_registry() {
  static const std::vector<KeySpec> keys = {
      {"env", KeyType::text, "pendulum"},
      {"scenario", KeyType::text, "final-buffer"},
      {"agent", KeyType::text, "bcq"},
      {"seed", KeyType::integer, "0"},
      {"out_dir", KeyType::text, "out"},
      {"batch_path", KeyType::text, ""},
      {"expert_path", KeyType::text, ""},
      {"discount", KeyType::real, "0.99"},
      {"buffer_size", KeyType::integer, "100000"},
      {"train_iterations", KeyType::integer, "100000"},
      {"eval_interval", KeyType::integer, "5000"},
      {"eval_episodes", KeyType::integer, "10"},
      {"minibatch_size", KeyType::integer, "100"},
      {"value_probe_size", KeyType::integer, "100"},
      {"mc_horizon", KeyType::integer, "500"},
      {"episode_horizon", KeyType::integer, "200"},
      {"exploration_noise", KeyType::real, "0.1"},
      {"behavior_noise", KeyType::real, "-1"},  // negative means the scenario default
      {"random_action_prob", KeyType::real, "0.3"},
      {"start_steps", KeyType::integer, "1000"},
      {"expert_train_steps", KeyType::integer, "30000"},
      {"tau", KeyType::real, "0.005"},
      {"lr", KeyType::real, "0.001"},
      {"actor_lr", KeyType::real, "0.0001"},
      {"critic_lr", KeyType::real, "0.001"},
      {"critic_l2", KeyType::real, "0.01"},
      {"vae_l2", KeyType::real, "0"},
      {"lambda", KeyType::real, "0.75"},
      {"n_candidates", KeyType::integer, "10"},
      {"phi", KeyType::real, "0.05"},
      {"hidden1", KeyType::integer, "400"},
      {"hidden2", KeyType::integer, "300"},
      {"vae_hidden1", KeyType::integer, "750"},
      {"vae_hidden2", KeyType::integer, "750"},
      {"latent_dim", KeyType::integer, "0"},
      {"q_init", KeyType::real, "0"},
      {"alpha0", KeyType::real, "1"},
      {"omega", KeyType::real, "1"},
      {"schedule", KeyType::text, "constant"},
      {"gridworld_noise", KeyType::real, "0"},
      {"analysis_policy", KeyType::text, "bcql"},
      {"real_wall_clock", KeyType::flag, "false"},
  };
  return keys;
}

class Config {
 public:
  static Config defaults() { return Config{}; }

  static Config from_text(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string stripped = strip(line.substr(0, line.find('#')));
      if (stripped.empty()) continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config line " + std::to_string(line_no) +
                                 ": expected key = value");
      const std::string key = strip(stripped.substr(0, eq));
      const std::string value = strip(stripped.substr(eq + 1));
      const KeySpec* spec = find(key);
      if (!spec)
        throw std::runtime_error("config line " + std::to_string(line_no) + ": unknown key '" +
                                 key + "'");
      check_type(*spec, value, line_no);
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static Config load(const std::string& path) { return from_text(read_text_file(path)); }

  void set(const std::string& key, const std::string& value) {
    const KeySpec* spec = find(key);
    if (!spec) throw std::runtime_error("unknown config key '" + key + "'");
    check_type(*spec, value, 0);
    values_[key] = value;
  }

  long get_int(const std::string& key) const {
    return std::stol(raw(key, KeyType::integer));
  }
  double get_real(const std::string& key) const {
    const KeySpec* spec = require(key);
    if (spec->type != KeyType::real && spec->type != KeyType::integer)
      throw std::logic_error("key '" + key + "' is not numeric");
    return std::stod(stored(key, *spec));
  }
  std::string get_text(const std::string& key) const { return raw(key, KeyType::text); }
  bool get_flag(const std::string& key) const {
    const std::string v = raw(key, KeyType::flag);
    return v == "true" || v == "1" || v == "yes" || v == "on";
  }

  /// Canonical text form: every registry key with its effective value.
  std::string to_text() const {
    std::string out;
    for (const auto& spec : config_registry()) {
      out += spec.name;
      out += " = ";
      out += stored(spec.name, spec);
      out += "\n";
    }
    return out;
  }

 private:
  static std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static const KeySpec* find(const std::string& key) {
    for (const auto& spec : config_registry())
      if (key == spec.name) return &spec;
    return nullptr;
  }

  static const KeySpec* require(const std::string& key) {
    const KeySpec* spec = find(key);
    if (!spec) throw std::logic_error("unregistered config key '" + key + "'");
    return spec;
  }

  static void check_type(const KeySpec& spec, const std::string& value, int line_no) {
    const std::string where =
        line_no > 0 ? "config line " + std::to_string(line_no) + ": " : std::string{};
    char* end = nullptr;
    switch (spec.type) {
      case KeyType::integer: {
        if (value.empty()) throw std::runtime_error(where + "empty integer for '" + spec.name + "'");
        std::strtol(value.c_str(), &end, 10);
        if (*end != '\0')
          throw std::runtime_error(where + "'" + value + "' is not an integer for key '" +
                                   spec.name + "'");
        break;
      }
      case KeyType::real: {
        if (value.empty()) throw std::runtime_error(where + "empty number for '" + spec.name + "'");
        std::strtod(value.c_str(), &end);
        if (*end != '\0')
          throw std::runtime_error(where + "'" + value + "' is not a number for key '" +
                                   spec.name + "'");
        break;
      }
      case KeyType::flag: {
        if (value != "true" && value != "false" && value != "1" && value != "0" &&
            value != "yes" && value != "no" && value != "on" && value != "off")
          throw std::runtime_error(where + "'" + value + "' is not a flag for key '" + spec.name +
                                   "'");
        break;
      }
      case KeyType::text:
        break;
    }
  }

  std::string stored(const std::string& key, const KeySpec& spec) const {
    const auto it = values_.find(key);
    return it != values_.end() ? it->second : std::string(spec.preset);
  }

  std::string raw(const std::string& key, KeyType want) const {
    const KeySpec* spec = require(key);
    if (spec->type != want) throw std::logic_error("key '" + key + "' read with the wrong type");
    return stored(key, *spec);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace bcqlab
