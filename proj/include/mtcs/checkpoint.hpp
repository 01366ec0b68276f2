#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mtcs/dataset.hpp"
#include "mtcs/training.hpp"

namespace mtcs {

// Trained model container: config block, then every named tensor in the flat
// enumeration order (preceded by the node bank for graph models).
struct Checkpoint {
  ModelKind kind = ModelKind::graph;
  int k = 0;
  double beta = 0.1;
  double alpha_t = 0, alpha_c = 0, alpha_p = 0;
  ParamStore params;
  NodeBank bank;  // graph models only
};

inline Checkpoint make_checkpoint(const TrainResult& r, const TrainConfig& cfg) {
  Checkpoint c;
  c.kind = r.kind;
  c.k = cfg.k;
  c.beta = cfg.beta;
  c.alpha_t = cfg.alpha_t;
  c.alpha_c = cfg.alpha_c;
  c.alpha_p = cfg.alpha_p;
  c.params = r.params;
  c.bank = r.bank;
  return c;
}

namespace detail {

inline void write_tensor(std::string& out, const std::string& name,
                         const Tensor& t) {
  out += "tensor " + name + " " + std::to_string(t.rows) + " " +
         std::to_string(t.cols) + "\n";
  for (int i = 0; i < t.rows; ++i) {
    for (int j = 0; j < t.cols; ++j) {
      if (j) out += ' ';
      out += fmt17(t.at(i, j));
    }
    out += '\n';
  }
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  const ModelConfig& mc = c.params.cfg;
  std::string out = "MTCS-CKPT v1\n";
  out += std::string("model=") + (c.kind == ModelKind::graph ? "graph" : "erm") + "\n";
  out += "T=" + std::to_string(mc.T) + " C=" + std::to_string(mc.C) +
         " d_in=" + std::to_string(mc.d_in) + " d=" + std::to_string(mc.d) +
         " L=" + std::to_string(mc.L) + "\n";
  out += "hidden=" + detail::join_ints(mc.hidden) + "\n";
  out += "k=" + std::to_string(c.k) + "\n";
  out += "beta=" + detail::fmt17(c.beta) + "\n";
  out += "alpha_t=" + detail::fmt17(c.alpha_t) + " alpha_c=" +
         detail::fmt17(c.alpha_c) + " alpha_p=" + detail::fmt17(c.alpha_p) + "\n";
  out += "decay=" + detail::fmt17(c.bank.decay) + "\n";
  if (c.kind == ModelKind::graph) {
    detail::write_tensor(out, "V_T", c.bank.V_T);
    detail::write_tensor(out, "V_C", c.bank.V_C);
  }
  for (const auto& [name, t] : c.params.named_tensors())
    detail::write_tensor(out, name, *t);
  return out;
}

inline Checkpoint parse_checkpoint(std::istream& in) {
  std::string line;
  int ln = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line))
      detail::parse_fail(ln + 1, std::string("missing ") + what);
    ++ln;
  };

  next_line("header");
  if (line != "MTCS-CKPT v1") detail::parse_fail(ln, "expected 'MTCS-CKPT v1' header");

  Checkpoint c;
  next_line("model kind");
  if (line == "model=graph")
    c.kind = ModelKind::graph;
  else if (line == "model=erm")
    c.kind = ModelKind::erm;
  else
    detail::parse_fail(ln, "expected 'model=graph' or 'model=erm'");

  ModelConfig mc;
  next_line("dimensions");
  {
    int n = -1;
    if (std::sscanf(line.c_str(), "T=%d C=%d d_in=%d d=%d L=%d%n", &mc.T, &mc.C,
                    &mc.d_in, &mc.d, &mc.L, &n) != 5 ||
        n != int(line.size()))
      detail::parse_fail(ln, "bad dimension line");
  }
  next_line("hidden widths");
  if (line.rfind("hidden=", 0) != 0) detail::parse_fail(ln, "expected 'hidden='");
  {
    std::stringstream ss(line.substr(7));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      try {
        mc.hidden.push_back(std::stoi(tok));
      } catch (...) {
        detail::parse_fail(ln, "bad hidden width '" + tok + "'");
      }
    }
  }
  next_line("k");
  if (std::sscanf(line.c_str(), "k=%d", &c.k) != 1)
    detail::parse_fail(ln, "expected 'k='");
  next_line("beta");
  if (std::sscanf(line.c_str(), "beta=%lf", &c.beta) != 1)
    detail::parse_fail(ln, "expected 'beta='");
  next_line("alphas");
  if (std::sscanf(line.c_str(), "alpha_t=%lf alpha_c=%lf alpha_p=%lf", &c.alpha_t,
                  &c.alpha_c, &c.alpha_p) != 3)
    detail::parse_fail(ln, "expected alpha line");
  double decay = 0.9;
  next_line("decay");
  if (std::sscanf(line.c_str(), "decay=%lf", &decay) != 1)
    detail::parse_fail(ln, "expected 'decay='");

  try {
    c.params = make_param_store(mc);
  } catch (const std::exception& e) {
    detail::parse_fail(ln, e.what());
  }

  auto read_tensor = [&](const std::string& name, Tensor& t) {
    next_line(("tensor " + name).c_str());
    std::stringstream hs(line);
    std::string kw, got;
    int rows = 0, cols = 0;
    if (!(hs >> kw >> got >> rows >> cols) || kw != "tensor" || got != name)
      detail::parse_fail(ln, "expected 'tensor " + name + " <rows> <cols>'");
    if (rows != t.rows || cols != t.cols)
      detail::parse_fail(ln, "tensor " + name + ": shape mismatch");
    for (int i = 0; i < rows; ++i) {
      next_line("tensor row");
      std::stringstream rs(line);
      for (int j = 0; j < cols; ++j)
        if (!(rs >> t.at(i, j))) detail::parse_fail(ln, "bad tensor row");
      std::string extra;
      if (rs >> extra) detail::parse_fail(ln, "trailing data in tensor row");
    }
  };

  if (c.kind == ModelKind::graph) {
    c.bank = NodeBank(mc.T, mc.C, mc.d);
    c.bank.decay = decay;
    read_tensor("V_T", c.bank.V_T);
    read_tensor("V_C", c.bank.V_C);
    c.bank.task_seen.assign(mc.T, 1);
    c.bank.class_seen.assign(mc.C, 1);
  } else {
    c.bank.decay = decay;
  }
  for (auto& [name, t] : c.params.named_tensors()) read_tensor(name, *t);
  if (std::getline(in, line)) detail::parse_fail(ln + 1, "trailing data");
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f << serialize_checkpoint(c);
  if (!f) throw DataError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint: " + path);
  return parse_checkpoint(f);
}

}  // namespace mtcs
