#pragma once

#include <vector>

#include "mtcs/params.hpp"
#include "mtcs/tape.hpp"
#include "mtcs/tensor.hpp"

namespace mtcs {

// Shared rectifier extractor: linear layers with ReLU between them, linear
// output. The value and tape paths run through the same kernels, so both
// produce bit-identical embeddings.
inline Tensor embed_batch(const ParamStore& p, const Tensor& x) {
  check_shape(x.cols == p.cfg.d_in, "embed: input width != d_in");
  Tensor h = x;
  for (size_t i = 0; i < p.ext_W.size(); ++i) {
    h = add_rowvec(matmul(h, p.ext_W[i]), p.ext_b[i]);
    if (i + 1 < p.ext_W.size()) h = relu(h);
  }
  return h;
}

inline std::vector<double> embed(const ParamStore& p, const std::vector<double>& x) {
  return embed_batch(p, Tensor::from_row(x)).row_vec(0);
}

// Logits over the entire label space for the task-t classifier.
inline std::vector<double> classify(const ParamStore& p, int t,
                                    const std::vector<double>& feature) {
  if (t < 0 || t >= p.cfg.T) throw DataError("classify: task id out of range");
  check_shape(int(feature.size()) == p.cfg.d, "classify: feature width != d");
  Tensor y = add_rowvec(matmul(Tensor::from_row(feature), p.cls_W[t]), p.cls_b[t]);
  return y.row_vec(0);
}

inline int argmax(const std::vector<double>& v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = int(i);
  return best;
}

// Tape leaves for every tensor of a ParamStore, in flat enumeration order.
struct ParamRefs {
  std::vector<Tape::Ref> ext_W, ext_b;
  Tape::Ref task_edge_w = -1, task_edge_b = -1;
  Tape::Ref class_edge_w = -1, class_edge_b = -1;
  std::vector<Tape::Ref> gnn_W, gnn_U;
  std::vector<Tape::Ref> cls_W, cls_b;
  std::vector<Tape::Ref> all;  // aligned with ParamStore::named_tensors()
};

inline ParamRefs make_param_refs(Tape& tape, const ParamStore& p) {
  ParamRefs r;
  for (size_t i = 0; i < p.ext_W.size(); ++i) {
    r.ext_W.push_back(tape.leaf(p.ext_W[i]));
    r.ext_b.push_back(tape.leaf(p.ext_b[i]));
    r.all.push_back(r.ext_W.back());
    r.all.push_back(r.ext_b.back());
  }
  r.task_edge_w = tape.leaf(p.task_edge_w);
  r.task_edge_b = tape.leaf(p.task_edge_b);
  r.class_edge_w = tape.leaf(p.class_edge_w);
  r.class_edge_b = tape.leaf(p.class_edge_b);
  r.all.push_back(r.task_edge_w);
  r.all.push_back(r.task_edge_b);
  r.all.push_back(r.class_edge_w);
  r.all.push_back(r.class_edge_b);
  for (size_t l = 0; l < p.gnn_W.size(); ++l) {
    r.gnn_W.push_back(tape.leaf(p.gnn_W[l]));
    r.gnn_U.push_back(tape.leaf(p.gnn_U[l]));
    r.all.push_back(r.gnn_W.back());
    r.all.push_back(r.gnn_U.back());
  }
  for (size_t t = 0; t < p.cls_W.size(); ++t) {
    r.cls_W.push_back(tape.leaf(p.cls_W[t]));
    r.cls_b.push_back(tape.leaf(p.cls_b[t]));
    r.all.push_back(r.cls_W.back());
    r.all.push_back(r.cls_b.back());
  }
  return r;
}

inline Tape::Ref embed_batch_node(Tape& tape, const ParamRefs& refs,
                                  size_t n_layers, Tape::Ref x) {
  Tape::Ref h = x;
  for (size_t i = 0; i < n_layers; ++i) {
    h = tape.add_rowvec(tape.matmul(h, refs.ext_W[i]), refs.ext_b[i]);
    if (i + 1 < n_layers) h = tape.relu(h);
  }
  return h;
}

// Flat gradient vector read back from the leaves, ascending enumeration order.
inline std::vector<double> collect_flat_grad(const Tape& tape, const ParamRefs& refs) {
  std::vector<double> g;
  for (Tape::Ref r : refs.all) {
    const Tensor& t = tape.grad(r);
    g.insert(g.end(), t.a.begin(), t.a.end());
  }
  return g;
}

}  // namespace mtcs
