#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mtcs/common.hpp"
#include "mtcs/tensor.hpp"

namespace mtcs {

enum class ModelKind { graph, erm };

struct ModelConfig {
  int T = 1;
  int C = 2;
  int d_in = 2;
  int d = 2;
  int L = 0;
  std::vector<int> hidden;  // hidden widths of the extractor; empty = single linear layer

  bool operator==(const ModelConfig& o) const {
    return T == o.T && C == o.C && d_in == o.d_in && d == o.d && L == o.L &&
           hidden == o.hidden;
  }
};

// All learnable parameters, addressable as one flat scalar sequence. The
// enumeration order is the declaration order below, row-major within each
// tensor, and is part of the checkpoint and gradient contracts.
struct ParamStore {
  ModelConfig cfg;
  std::vector<Tensor> ext_W, ext_b;  // layer i: (dims[i] x dims[i+1]), (1 x dims[i+1])
  Tensor task_edge_w, task_edge_b;   // 1 x d, 1 x 1
  Tensor class_edge_w, class_edge_b;
  std::vector<Tensor> gnn_W;  // d x d
  std::vector<Tensor> gnn_U;  // 2d x d
  std::vector<Tensor> cls_W;  // per task: d x C
  std::vector<Tensor> cls_b;  // per task: 1 x C

  std::vector<std::pair<std::string, Tensor*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (size_t i = 0; i < ext_W.size(); ++i) {
      out.emplace_back("ext_W" + std::to_string(i), &ext_W[i]);
      out.emplace_back("ext_b" + std::to_string(i), &ext_b[i]);
    }
    out.emplace_back("task_edge_w", &task_edge_w);
    out.emplace_back("task_edge_b", &task_edge_b);
    out.emplace_back("class_edge_w", &class_edge_w);
    out.emplace_back("class_edge_b", &class_edge_b);
    for (size_t l = 0; l < gnn_W.size(); ++l) {
      out.emplace_back("gnn_W" + std::to_string(l + 1), &gnn_W[l]);
      out.emplace_back("gnn_U" + std::to_string(l + 1), &gnn_U[l]);
    }
    for (size_t t = 0; t < cls_W.size(); ++t) {
      out.emplace_back("cls_W" + std::to_string(t), &cls_W[t]);
      out.emplace_back("cls_b" + std::to_string(t), &cls_b[t]);
    }
    return out;
  }

  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const {
    auto mut = const_cast<ParamStore*>(this)->named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [n, p] : mut) out.emplace_back(n, p);
    return out;
  }

  int num_params() const {
    int n = 0;
    for (auto& [name, t] : named_tensors()) n += t->size();
    return n;
  }

  double get_flat(int i) const {
    if (i < 0) throw DataError("flat parameter index out of range");
    for (auto& [name, t] : named_tensors()) {
      if (i < t->size()) return t->a[i];
      i -= t->size();
    }
    throw DataError("flat parameter index out of range");
  }

  void set_flat(int i, double v) {
    if (i < 0) throw DataError("flat parameter index out of range");
    for (auto& [name, t] : named_tensors()) {
      if (i < t->size()) {
        t->a[i] = v;
        return;
      }
      i -= t->size();
    }
    throw DataError("flat parameter index out of range");
  }

  std::string name_of_flat(int i) const {
    if (i < 0) throw DataError("flat parameter index out of range");
    for (auto& [name, t] : named_tensors()) {
      if (i < t->size()) return name + "[" + std::to_string(i) + "]";
      i -= t->size();
    }
    throw DataError("flat parameter index out of range");
  }
};

inline std::vector<int> extractor_dims(const ModelConfig& cfg) {
  std::vector<int> dims;
  dims.push_back(cfg.d_in);
  for (int h : cfg.hidden) dims.push_back(h);
  dims.push_back(cfg.d);
  return dims;
}

inline ParamStore make_param_store(const ModelConfig& cfg) {
  if (cfg.T <= 0 || cfg.C <= 0 || cfg.d_in <= 0 || cfg.d <= 0 || cfg.L < 0)
    throw ConfigError("model config: bad dimensions");
  for (int h : cfg.hidden)
    if (h <= 0) throw ConfigError("model config: hidden width must be positive");
  ParamStore p;
  p.cfg = cfg;
  const auto dims = extractor_dims(cfg);
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    p.ext_W.emplace_back(dims[i], dims[i + 1]);
    p.ext_b.emplace_back(1, dims[i + 1]);
  }
  p.task_edge_w = Tensor(1, cfg.d);
  p.task_edge_b = Tensor(1, 1);
  p.class_edge_w = Tensor(1, cfg.d);
  p.class_edge_b = Tensor(1, 1);
  for (int l = 0; l < cfg.L; ++l) {
    p.gnn_W.emplace_back(cfg.d, cfg.d);
    p.gnn_U.emplace_back(2 * cfg.d, cfg.d);
  }
  for (int t = 0; t < cfg.T; ++t) {
    p.cls_W.emplace_back(cfg.d, cfg.C);
    p.cls_b.emplace_back(1, cfg.C);
  }
  return p;
}

// Uniform(-s, s) with s = scale / sqrt(fan_in); fan_in is the input width of
// the map each tensor belongs to.
inline ParamStore init_params(const ModelConfig& cfg, uint64_t seed,
                              double scale = 1.0) {
  ParamStore p = make_param_store(cfg);
  Rng rng(seed);
  auto fill = [&](Tensor& t, int fan_in) {
    const double s = scale / std::sqrt(double(fan_in));
    for (double& v : t.a) v = rng.uniform_sym(s);
  };
  const auto dims = extractor_dims(cfg);
  for (size_t i = 0; i < p.ext_W.size(); ++i) {
    fill(p.ext_W[i], dims[i]);
    fill(p.ext_b[i], dims[i]);
  }
  fill(p.task_edge_w, cfg.d);
  fill(p.task_edge_b, cfg.d);
  fill(p.class_edge_w, cfg.d);
  fill(p.class_edge_b, cfg.d);
  for (int l = 0; l < cfg.L; ++l) {
    fill(p.gnn_W[l], cfg.d);
    fill(p.gnn_U[l], 2 * cfg.d);
  }
  for (int t = 0; t < cfg.T; ++t) {
    fill(p.cls_W[t], cfg.d);
    fill(p.cls_b[t], cfg.d);
  }
  return p;
}

}  // namespace mtcs
