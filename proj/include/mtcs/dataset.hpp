#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mtcs/common.hpp"
#include "mtcs/tensor.hpp"

namespace mtcs {

enum class Split { train, test };

struct LabeledRecord {
  int task_id = 0;
  int class_id = 0;
  Split split = Split::train;
  std::vector<double> features;

  bool operator==(const LabeledRecord& o) const {
    return task_id == o.task_id && class_id == o.class_id && split == o.split &&
           features == o.features;
  }
};

struct DatasetManifest {
  int T = 0;
  int C = 0;
  int d_in = 0;
  std::vector<std::string> class_names;
  // Per task, the sorted observed training classes.
  std::vector<std::vector<int>> observed_classes;

  bool operator==(const DatasetManifest& o) const {
    return T == o.T && C == o.C && d_in == o.d_in &&
           class_names == o.class_names && observed_classes == o.observed_classes;
  }
  bool observes(int task, int klass) const {
    const auto& s = observed_classes[task];
    return std::binary_search(s.begin(), s.end(), klass);
  }
};

inline void validate_manifest(const DatasetManifest& m) {
  if (m.T <= 0 || m.C <= 0 || m.d_in <= 0)
    throw DataError("manifest: T, C and D must be positive");
  if (int(m.class_names.size()) != m.C)
    throw DataError("manifest: class name count != C");
  if (int(m.observed_classes.size()) != m.T)
    throw DataError("manifest: observed set count != T");
  std::vector<bool> covered(m.C, false);
  for (int t = 0; t < m.T; ++t) {
    const auto& s = m.observed_classes[t];
    if (s.empty()) throw DataError("manifest: task " + std::to_string(t) +
                                   " observes no classes");
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] < 0 || s[i] >= m.C)
        throw DataError("manifest: class id out of range");
      if (i > 0 && s[i] <= s[i - 1])
        throw DataError("manifest: observed classes not sorted ascending");
      covered[s[i]] = true;
    }
  }
  for (int c = 0; c < m.C; ++c)
    if (!covered[c])
      throw DataError("manifest: class " + std::to_string(c) +
                      " observed by no task (union must cover the label space)");
}

struct SynthConfig {
  int T = 4;
  int C = 8;
  int d_in = 16;
  double separation = 12.0;      // typical distance scale between class means
  double strength = 10.0;        // magnitude of the per-task affine map
  int train_per_class = 20;      // samples per (task, class), train split
  int test_per_class = 10;       // samples per (task, class), test split
  uint64_t seed = 1;
};

inline void validate_synth_config(const SynthConfig& c) {
  if (c.T <= 0 || c.C <= 0 || c.d_in <= 0 || c.train_per_class <= 0 ||
      c.test_per_class <= 0)
    throw ConfigError("synthetic config: all counts must be positive");
  if (!std::isfinite(c.separation) || !std::isfinite(c.strength))
    throw ConfigError("synthetic config: separation and strength must be finite");
}

// Class-conditional isotropic Gaussians pushed through one random affine map
// per task. strength = 0 leaves every task with the identical distribution.
inline std::pair<DatasetManifest, std::vector<LabeledRecord>> generate_synthetic(
    const SynthConfig& cfg) {
  validate_synth_config(cfg);
  Rng rng(cfg.seed);

  const int d = cfg.d_in;
  std::vector<std::vector<double>> means(cfg.C, std::vector<double>(d));
  for (int c = 0; c < cfg.C; ++c) {
    double norm2 = 0.0;
    for (int j = 0; j < d; ++j) {
      means[c][j] = rng.normal();
      norm2 += means[c][j] * means[c][j];
    }
    const double s = cfg.separation / std::sqrt(std::max(norm2, 1e-12));
    for (int j = 0; j < d; ++j) means[c][j] *= s;
  }

  // Task map: x -> (I + strength*G/sqrt(d)) x / sqrt(1 + strength^2) + offset.
  // The normalization keeps the map roughly norm-preserving at any strength;
  // strength 0 is the identity, large strengths approach an independent
  // random linear map per task.
  std::vector<Tensor> task_lin(cfg.T);
  std::vector<std::vector<double>> task_off(cfg.T, std::vector<double>(d));
  const double gs = cfg.strength / std::sqrt(double(d));
  const double renorm = 1.0 / std::sqrt(1.0 + cfg.strength * cfg.strength);
  for (int t = 0; t < cfg.T; ++t) {
    task_lin[t] = Tensor(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        task_lin[t].at(i, j) = ((i == j ? 1.0 : 0.0) + gs * rng.normal()) * renorm;
    for (int j = 0; j < d; ++j)
      task_off[t][j] = cfg.strength * renorm * rng.normal() / std::sqrt(double(d));
  }

  DatasetManifest m;
  m.T = cfg.T;
  m.C = cfg.C;
  m.d_in = d;
  for (int c = 0; c < cfg.C; ++c) m.class_names.push_back("c" + std::to_string(c));
  m.observed_classes.assign(cfg.T, {});
  for (int t = 0; t < cfg.T; ++t)
    for (int c = 0; c < cfg.C; ++c) m.observed_classes[t].push_back(c);

  std::vector<LabeledRecord> records;
  records.reserve(size_t(cfg.T) * cfg.C * (cfg.train_per_class + cfg.test_per_class));
  std::vector<double> base(d), x(d);
  for (int t = 0; t < cfg.T; ++t) {
    for (int c = 0; c < cfg.C; ++c) {
      const int totals[2] = {cfg.train_per_class, cfg.test_per_class};
      for (int si = 0; si < 2; ++si) {
        for (int n = 0; n < totals[si]; ++n) {
          for (int j = 0; j < d; ++j) base[j] = means[c][j] + rng.normal();
          for (int i = 0; i < d; ++i) {
            double v = task_off[t][i];
            for (int j = 0; j < d; ++j) v += task_lin[t].at(i, j) * base[j];
            x[i] = v;
          }
          LabeledRecord r;
          r.task_id = t;
          r.class_id = c;
          r.split = si == 0 ? Split::train : Split::test;
          r.features = x;
          records.push_back(std::move(r));
        }
      }
    }
  }
  return {std::move(m), std::move(records)};
}

// Average fraction of the label space missing from each task's training set.
// Computed as an integer ratio so exact targets stay exact.
inline double missing_rate(const DatasetManifest& m) {
  validate_manifest(m);
  long long missing = 0;
  for (int t = 0; t < m.T; ++t)
    missing += m.C - (long long)m.observed_classes[t].size();
  return double(missing) / double((long long)m.T * m.C);
}

// Equal-count per-task observed sets, union guaranteed to cover the label
// space. Coverage repair swaps an uncovered class into the first task (by
// observed count, then id) that holds a class still covered elsewhere.
inline std::vector<std::vector<int>> random_assignment(int T, int C,
                                                       double rate,
                                                       uint64_t seed) {
  if (T <= 0 || C <= 0) throw ConfigError("random_assignment: T and C must be positive");
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("random_assignment: missing rate must lie in [0, 1)");
  const int n_obs = int(std::llround(double(C) * (1.0 - rate)));
  if (n_obs < 1) throw ConfigError("random_assignment: no observable classes at this rate");
  if ((long long)n_obs * T < C)
    throw ConfigError("random_assignment: " + std::to_string(n_obs) +
                      " classes per task over " + std::to_string(T) +
                      " tasks cannot cover " + std::to_string(C) + " classes");

  Rng rng(seed);
  std::vector<std::set<int>> sets(T);
  std::vector<int> pool(C);
  for (int c = 0; c < C; ++c) pool[c] = c;
  for (int t = 0; t < T; ++t) {
    rng.shuffle(pool);
    sets[t] = std::set<int>(pool.begin(), pool.begin() + n_obs);
  }

  std::vector<int> coverage(C, 0);
  for (const auto& s : sets)
    for (int c : s) ++coverage[c];
  for (int c = 0; c < C; ++c) {
    if (coverage[c] > 0) continue;
    // Swap c in; evict the most redundantly covered class (ties: lowest id)
    // from the first eligible task so per-task counts stay equal.
    bool placed = false;
    for (int t = 0; t < T && !placed; ++t) {
      int evict = -1;
      for (int cand : sets[t])
        if (coverage[cand] >= 2 && (evict < 0 || coverage[cand] > coverage[evict]))
          evict = cand;
      if (evict < 0) continue;
      sets[t].erase(evict);
      --coverage[evict];
      sets[t].insert(c);
      ++coverage[c];
      placed = true;
    }
    if (!placed)
      throw ConfigError("random_assignment: coverage repair failed");  // unreachable when feasible
  }

  std::vector<std::vector<int>> out(T);
  for (int t = 0; t < T; ++t) out[t] = std::vector<int>(sets[t].begin(), sets[t].end());
  return out;
}

// Drops train records whose class is unobserved for their task; the test
// split is untouched. The manifest adopts the assignment.
inline std::pair<DatasetManifest, std::vector<LabeledRecord>> apply_category_shift(
    const DatasetManifest& manifest, const std::vector<LabeledRecord>& records,
    const std::vector<std::vector<int>>& assignment) {
  validate_manifest(manifest);
  if (int(assignment.size()) != manifest.T)
    throw DataError("assignment: need one observed set per task");
  DatasetManifest out = manifest;
  out.observed_classes = assignment;
  for (auto& s : out.observed_classes) std::sort(s.begin(), s.end());
  validate_manifest(out);  // rejects empty sets, out-of-range ids, uncovered classes

  std::vector<LabeledRecord> kept;
  kept.reserve(records.size());
  for (const auto& r : records) {
    if (r.split == Split::train && !out.observes(r.task_id, r.class_id)) continue;
    kept.push_back(r);
  }
  return {std::move(out), std::move(kept)};
}

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

[[noreturn]] inline void parse_fail(int line, const std::string& what) {
  throw DataError("parse error: line " + std::to_string(line) + ": " + what);
}

}  // namespace detail

inline std::string serialize_dataset(const DatasetManifest& m,
                                     const std::vector<LabeledRecord>& records) {
  validate_manifest(m);
  std::string out;
  out += "MTCS v1\n";
  out += "T=" + std::to_string(m.T) + " C=" + std::to_string(m.C) +
         " D=" + std::to_string(m.d_in) + "\n";
  out += "classes=";
  for (int c = 0; c < m.C; ++c) {
    if (c) out += ',';
    const std::string& name = m.class_names[c];
    if (name.empty() || name.find_first_of(",\t\n") != std::string::npos)
      throw DataError("class name unsuitable for serialization: '" + name + "'");
    out += name;
  }
  out += '\n';
  for (int t = 0; t < m.T; ++t)
    out += "task" + std::to_string(t) + "_observed=" +
           detail::join_ints(m.observed_classes[t]) + "\n";
  for (const auto& r : records) {
    if (r.task_id < 0 || r.task_id >= m.T || r.class_id < 0 || r.class_id >= m.C)
      throw DataError("record task/class id outside manifest range");
    if (int(r.features.size()) != m.d_in)
      throw DataError("record feature length != D");
    out += std::to_string(r.task_id);
    out += '\t';
    out += r.split == Split::train ? "train" : "test";
    out += '\t';
    out += std::to_string(r.class_id);
    out += '\t';
    for (size_t j = 0; j < r.features.size(); ++j) {
      if (j) out += ' ';
      out += detail::fmt17(r.features[j]);
    }
    out += '\n';
  }
  return out;
}

inline std::pair<DatasetManifest, std::vector<LabeledRecord>> parse_dataset(
    std::istream& in) {
  std::string line;
  int ln = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) detail::parse_fail(ln + 1, std::string("missing ") + what);
    ++ln;
  };

  next_line("header");
  if (line != "MTCS v1") detail::parse_fail(ln, "expected 'MTCS v1' header");

  next_line("dimension line");
  DatasetManifest m;
  {
    int n = -1;
    if (std::sscanf(line.c_str(), "T=%d C=%d D=%d%n", &m.T, &m.C, &m.d_in, &n) != 3 ||
        n != int(line.size()))
      detail::parse_fail(ln, "expected 'T=<int> C=<int> D=<int>'");
    if (m.T <= 0 || m.C <= 0 || m.d_in <= 0)
      detail::parse_fail(ln, "T, C and D must be positive");
  }

  next_line("class list");
  if (line.rfind("classes=", 0) != 0) detail::parse_fail(ln, "expected 'classes='");
  {
    std::stringstream ss(line.substr(8));
    std::string name;
    while (std::getline(ss, name, ',')) m.class_names.push_back(name);
    if (int(m.class_names.size()) != m.C)
      detail::parse_fail(ln, "expected " + std::to_string(m.C) + " class names, got " +
                                 std::to_string(m.class_names.size()));
  }

  m.observed_classes.assign(m.T, {});
  for (int t = 0; t < m.T; ++t) {
    next_line("observed-class line");
    const std::string prefix = "task" + std::to_string(t) + "_observed=";
    if (line.rfind(prefix, 0) != 0)
      detail::parse_fail(ln, "expected '" + prefix + "...'");
    std::stringstream ss(line.substr(prefix.size()));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      size_t pos = 0;
      int id = 0;
      try {
        id = std::stoi(tok, &pos);
      } catch (...) {
        detail::parse_fail(ln, "bad class id '" + tok + "'");
      }
      if (pos != tok.size()) detail::parse_fail(ln, "bad class id '" + tok + "'");
      if (id < 0 || id >= m.C) detail::parse_fail(ln, "class id out of range");
      if (!m.observed_classes[t].empty() && id <= m.observed_classes[t].back())
        detail::parse_fail(ln, "observed classes must be sorted ascending");
      m.observed_classes[t].push_back(id);
    }
    if (m.observed_classes[t].empty())
      detail::parse_fail(ln, "task observes no classes");
  }

  try {
    validate_manifest(m);
  } catch (const DataError& e) {
    detail::parse_fail(ln, e.what());
  }

  std::vector<LabeledRecord> records;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) detail::parse_fail(ln, "empty record line");
    std::stringstream ss(line);
    std::string task_s, split_s, class_s, feats_s;
    if (!std::getline(ss, task_s, '\t') || !std::getline(ss, split_s, '\t') ||
        !std::getline(ss, class_s, '\t') || !std::getline(ss, feats_s))
      detail::parse_fail(ln, "expected '<task>\\t<split>\\t<class>\\t<features>'");
    LabeledRecord r;
    try {
      r.task_id = std::stoi(task_s);
      r.class_id = std::stoi(class_s);
    } catch (...) {
      detail::parse_fail(ln, "bad task or class id");
    }
    if (r.task_id < 0 || r.task_id >= m.T)
      detail::parse_fail(ln, "unknown task id " + task_s);
    if (r.class_id < 0 || r.class_id >= m.C)
      detail::parse_fail(ln, "unknown class id " + class_s);
    if (split_s == "train")
      r.split = Split::train;
    else if (split_s == "test")
      r.split = Split::test;
    else
      detail::parse_fail(ln, "unknown split '" + split_s + "'");
    std::stringstream fs(feats_s);
    std::string tok;
    while (fs >> tok) {
      try {
        size_t pos = 0;
        r.features.push_back(std::stod(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (...) {
        detail::parse_fail(ln, "bad feature value '" + tok + "'");
      }
    }
    if (int(r.features.size()) != m.d_in)
      detail::parse_fail(ln, "expected " + std::to_string(m.d_in) + " features, got " +
                                 std::to_string(r.features.size()));
    records.push_back(std::move(r));
  }
  return {std::move(m), std::move(records)};
}

inline void save_dataset(const std::string& path, const DatasetManifest& m,
                         const std::vector<LabeledRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write dataset file: " + path);
  f << serialize_dataset(m, records);
  if (!f) throw DataError("write failed: " + path);
}

inline std::pair<DatasetManifest, std::vector<LabeledRecord>> load_dataset(
    const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read dataset file: " + path);
  return parse_dataset(f);
}

// Assignment file: one 'task<t>_observed=' line per task, entries either
// class ids or names from the manifest.
inline std::vector<std::vector<int>> parse_assignment_file(
    const std::string& path, const DatasetManifest& m) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read assignment file: " + path);
  std::vector<std::vector<int>> sets(m.T);
  std::string line;
  int ln = 0;
  for (int t = 0; t < m.T; ++t) {
    if (!std::getline(f, line)) detail::parse_fail(ln + 1, "missing observed-class line");
    ++ln;
    const std::string prefix = "task" + std::to_string(t) + "_observed=";
    if (line.rfind(prefix, 0) != 0)
      detail::parse_fail(ln, "expected '" + prefix + "...'");
    std::stringstream ss(line.substr(prefix.size()));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      int id = -1;
      try {
        size_t pos = 0;
        id = std::stoi(tok, &pos);
        if (pos != tok.size()) id = -1;
      } catch (...) {
        id = -1;
      }
      if (id < 0) {
        for (int c = 0; c < m.C; ++c)
          if (m.class_names[c] == tok) {
            id = c;
            break;
          }
        if (id < 0) detail::parse_fail(ln, "unknown class '" + tok + "'");
      }
      if (id >= m.C) detail::parse_fail(ln, "class id out of range");
      sets[t].push_back(id);
    }
    std::sort(sets[t].begin(), sets[t].end());
  }
  return sets;
}

}  // namespace mtcs
