#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mtcs/dataset.hpp"
#include "mtcs/training.hpp"

namespace mtcs {

// Flat `key = value` configuration covering data generation, the shift, and
// training. Unknown keys are rejected.
struct RunConfig {
  // synthetic data
  int T = 4, C = 8, d_in = 16;
  double separation = 12.0, strength = 10.0;
  int train_per_class = 20, test_per_class = 10;
  // category shift
  double missing_rate = 0.5;
  // model and training
  std::string model = "graph";  // graph | erm
  int d = 16, L = 4, k = 0, hidden_layers = 2;
  double beta = 0.1, alpha_t = 0, alpha_c = 0, alpha_p = 0;
  double lr = 0.05;
  int batch_per_task = 8, iterations = 2000;
  std::string optimizer = "sgd";  // sgd | sgd_momentum
  uint64_t seed = 1;
};

namespace detail {

inline void trim(std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& val);

template <>
inline int parse_num<int>(const std::string& key, const std::string& val) {
  try {
    size_t pos = 0;
    const int v = std::stoi(val, &pos);
    if (pos == val.size()) return v;
  } catch (...) {
  }
  throw ConfigError("config: key '" + key + "' expects an integer, got '" + val + "'");
}

template <>
inline double parse_num<double>(const std::string& key, const std::string& val) {
  try {
    size_t pos = 0;
    const double v = std::stod(val, &pos);
    if (pos == val.size() && std::isfinite(v)) return v;
  } catch (...) {
  }
  throw ConfigError("config: key '" + key + "' expects a number, got '" + val + "'");
}

template <>
inline uint64_t parse_num<uint64_t>(const std::string& key, const std::string& val) {
  try {
    size_t pos = 0;
    const unsigned long long v = std::stoull(val, &pos);
    if (pos == val.size()) return v;
  } catch (...) {
  }
  throw ConfigError("config: key '" + key + "' expects a non-negative integer, got '" +
                    val + "'");
}

}  // namespace detail

inline void set_config_key(RunConfig& c, const std::string& key,
                           const std::string& val) {
  using detail::parse_num;
  if (key == "T") c.T = parse_num<int>(key, val);
  else if (key == "C") c.C = parse_num<int>(key, val);
  else if (key == "d_in") c.d_in = parse_num<int>(key, val);
  else if (key == "separation") c.separation = parse_num<double>(key, val);
  else if (key == "strength") c.strength = parse_num<double>(key, val);
  else if (key == "train_per_class") c.train_per_class = parse_num<int>(key, val);
  else if (key == "test_per_class") c.test_per_class = parse_num<int>(key, val);
  else if (key == "missing_rate") c.missing_rate = parse_num<double>(key, val);
  else if (key == "model") {
    if (val != "graph" && val != "erm")
      throw ConfigError("config: model must be 'graph' or 'erm'");
    c.model = val;
  } else if (key == "d") c.d = parse_num<int>(key, val);
  else if (key == "L") c.L = parse_num<int>(key, val);
  else if (key == "k") c.k = parse_num<int>(key, val);
  else if (key == "hidden_layers") c.hidden_layers = parse_num<int>(key, val);
  else if (key == "beta") c.beta = parse_num<double>(key, val);
  else if (key == "alpha_t") c.alpha_t = parse_num<double>(key, val);
  else if (key == "alpha_c") c.alpha_c = parse_num<double>(key, val);
  else if (key == "alpha_p") c.alpha_p = parse_num<double>(key, val);
  else if (key == "lr") c.lr = parse_num<double>(key, val);
  else if (key == "batch_per_task") c.batch_per_task = parse_num<int>(key, val);
  else if (key == "iterations") c.iterations = parse_num<int>(key, val);
  else if (key == "optimizer") {
    if (val != "sgd" && val != "sgd_momentum")
      throw ConfigError("config: optimizer must be 'sgd' or 'sgd_momentum'");
    c.optimizer = val;
  } else if (key == "seed") c.seed = parse_num<uint64_t>(key, val);
  else
    throw ConfigError("config: unknown key '" + key + "'");
}

inline RunConfig parse_run_config(std::istream& in) {
  RunConfig c;
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(ln) +
                        ": expected 'key = value'");
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    detail::trim(key);
    detail::trim(val);
    set_config_key(c, key, val);
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file: " + path);
  return parse_run_config(f);
}

inline SynthConfig synth_config(const RunConfig& c) {
  SynthConfig s;
  s.T = c.T;
  s.C = c.C;
  s.d_in = c.d_in;
  s.separation = c.separation;
  s.strength = c.strength;
  s.train_per_class = c.train_per_class;
  s.test_per_class = c.test_per_class;
  s.seed = c.seed;
  return s;
}

inline TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.d = c.d;
  t.L = c.L;
  t.k = c.k;
  t.hidden_layers = c.hidden_layers;
  t.beta = c.beta;
  t.alpha_t = c.alpha_t;
  t.alpha_c = c.alpha_c;
  t.alpha_p = c.alpha_p;
  t.lr = c.lr;
  t.batch_per_task = c.batch_per_task;
  t.iterations = c.iterations;
  t.seed = c.seed;
  t.optimizer = c.optimizer == "sgd" ? Optimizer::sgd : Optimizer::sgd_momentum;
  return t;
}

}  // namespace mtcs
