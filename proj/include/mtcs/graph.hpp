#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mtcs/params.hpp"
#include "mtcs/tensor.hpp"

namespace mtcs {

// Task and class node features, maintained by moving average during training.
// A row is "seen" once it has absorbed its first batch; the first update
// adopts the batch mean outright, later ones blend with factor `decay`.
struct NodeBank {
  Tensor V_T;  // T x d
  Tensor V_C;  // C x d
  double decay = 0.9;
  std::vector<uint8_t> task_seen, class_seen;

  NodeBank() = default;
  NodeBank(int T, int C, int d)
      : V_T(T, d), V_C(C, d), task_seen(T, 0), class_seen(C, 0) {}
  NodeBank(Tensor vt, Tensor vc, double dec = 0.9)
      : V_T(std::move(vt)),
        V_C(std::move(vc)),
        decay(dec),
        task_seen(V_T.rows, 1),
        class_seen(V_C.rows, 1) {}

  int tasks() const { return V_T.rows; }
  int classes() const { return V_C.rows; }
  int dim() const { return V_T.cols; }
};

struct EdgeParams {
  const Tensor* W_T = nullptr;  // 1 x d
  const Tensor* b_T = nullptr;  // 1 x 1
  const Tensor* W_C = nullptr;
  const Tensor* b_C = nullptr;
  double alpha_T = 1.0, alpha_C = 1.0, alpha_P = 1.0;
};

inline double resolve_alpha(double alpha, int d) {
  return alpha > 0.0 ? alpha : std::sqrt(double(d));
}

inline EdgeParams edge_params(const ParamStore& p, double alpha_t, double alpha_c,
                              double alpha_p) {
  EdgeParams e;
  e.W_T = &p.task_edge_w;
  e.b_T = &p.task_edge_b;
  e.W_C = &p.class_edge_w;
  e.b_C = &p.class_edge_b;
  e.alpha_T = resolve_alpha(alpha_t, p.cfg.d);
  e.alpha_C = resolve_alpha(alpha_c, p.cfg.d);
  e.alpha_P = resolve_alpha(alpha_p, p.cfg.d);
  if (e.alpha_T <= 0 || e.alpha_C <= 0 || e.alpha_P <= 0)
    throw ConfigError("edge scaling factors must be positive");
  return e;
}

namespace detail {

inline double metric_edge(const Tensor& w, const Tensor& b, double alpha,
                          const double* vi, const double* vj, int d) {
  double s = 0.0;
  for (int j = 0; j < d; ++j) s += w.a[j] * (std::abs(vi[j] - vj[j]) / alpha);
  return logistic(s + b.a[0]);
}

}  // namespace detail

// sigma(W_T |v_i - v_j| / alpha_T + b_T); symmetric in its arguments.
inline double task_edge(const EdgeParams& e, const std::vector<double>& vi,
                        const std::vector<double>& vj) {
  check_shape(vi.size() == vj.size() && int(vi.size()) == e.W_T->cols, "task_edge");
  return detail::metric_edge(*e.W_T, *e.b_T, e.alpha_T, vi.data(), vj.data(),
                             int(vi.size()));
}

inline double class_edge(const EdgeParams& e, const std::vector<double>& ki,
                         const std::vector<double>& kj) {
  check_shape(ki.size() == kj.size() && int(ki.size()) == e.W_C->cols, "class_edge");
  return detail::metric_edge(*e.W_C, *e.b_C, e.alpha_C, ki.data(), kj.data(),
                             int(ki.size()));
}

// C x T matrix of Gaussian-kernel similarities, each row normalized over the
// tasks. Parameter-free by design.
inline Tensor class_task_edges(const NodeBank& bank, double alpha_p) {
  if (alpha_p <= 0.0) throw ConfigError("class_task_edges: alpha must be positive");
  return row_softmax(gauss_scores(bank.V_C, bank.V_T, alpha_p));
}

// Scaled-dot-product similarities of one instance against the rows of V,
// normalized to the simplex.
inline std::vector<double> instance_edges(const std::vector<double>& e,
                                          const Tensor& v, int d) {
  check_shape(int(e.size()) == v.cols && v.cols == d, "instance_edges");
  Tensor x = Tensor::from_row(e);
  return row_softmax(dot_scores(x, v, 1.0 / std::sqrt(double(d)))).row_vec(0);
}

// Moving-average update of the nodes touched by a batch; untouched rows keep
// their values. Updates task nodes first, then class nodes.
inline NodeBank update_node_bank(NodeBank bank, const Tensor& embeddings,
                                 const std::vector<int>& task_ids,
                                 const std::vector<int>& class_ids) {
  check_shape(embeddings.rows == int(task_ids.size()) &&
                  embeddings.rows == int(class_ids.size()),
              "update_node_bank: id count != batch rows");
  check_shape(embeddings.rows >= 1, "update_node_bank: empty batch");
  check_shape(embeddings.cols == bank.dim(), "update_node_bank: width != d");
  auto apply = [&](Tensor& nodes, std::vector<uint8_t>& seen,
                   const std::vector<int>& ids) {
    const int n = nodes.rows;
    std::vector<std::vector<int>> groups(n);
    for (int i = 0; i < embeddings.rows; ++i) {
      check_shape(ids[i] >= 0 && ids[i] < n, "update_node_bank: id out of range");
      groups[ids[i]].push_back(i);
    }
    for (int r = 0; r < n; ++r) {
      if (groups[r].empty()) continue;
      Tensor m = rows_mean(embeddings, groups[r]);
      const double decay = seen[r] ? bank.decay : 0.0;
      for (int j = 0; j < nodes.cols; ++j)
        nodes.at(r, j) = decay * nodes.at(r, j) + (1.0 - decay) * m.a[j];
      seen[r] = 1;
    }
  };
  apply(bank.V_T, bank.task_seen, task_ids);
  apply(bank.V_C, bank.class_seen, class_ids);
  return bank;
}

// Block adjacency over [tasks; classes; instances] plus the directional read
// mask used by message passing: task/class rows read only tasks and classes,
// instance rows read tasks, classes and themselves.
struct AssociationGraph {
  int T = 0, C = 0, B = 0;
  Tensor node_features;            // (T+C+B) x d
  Tensor adjacency;                // (T+C+B) x (T+C+B)
  std::vector<int> instance_task_ids;
  std::vector<uint8_t> read_mask;  // N*N, row-major

  int nodes() const { return T + C + B; }
  bool may_read(int i, int j) const { return read_mask[size_t(i) * nodes() + j] != 0; }
};

inline AssociationGraph assemble(const NodeBank& bank, const EdgeParams& e,
                                 const Tensor& instances,
                                 const std::vector<int>& task_ids) {
  const int T = bank.tasks(), C = bank.classes(), B = instances.rows;
  check_shape(B >= 1, "assemble: need at least one instance");
  check_shape(instances.cols == bank.dim(), "assemble: instance width != d");
  check_shape(int(task_ids.size()) == B, "assemble: task id count != B");
  const int N = T + C + B;

  AssociationGraph g;
  g.T = T;
  g.C = C;
  g.B = B;
  g.instance_task_ids = task_ids;
  g.node_features = concat_rows(concat_rows(bank.V_T, bank.V_C), instances);
  g.adjacency = Tensor(N, N);
  Tensor& a = g.adjacency;

  for (int i = 0; i < T; ++i)
    for (int j = i; j < T; ++j) {
      const double w = detail::metric_edge(*e.W_T, *e.b_T, e.alpha_T,
                                           bank.V_T.row_ptr(i), bank.V_T.row_ptr(j),
                                           bank.dim());
      a.at(i, j) = w;
      a.at(j, i) = w;
    }
  for (int i = 0; i < C; ++i)
    for (int j = i; j < C; ++j) {
      const double w = detail::metric_edge(*e.W_C, *e.b_C, e.alpha_C,
                                           bank.V_C.row_ptr(i), bank.V_C.row_ptr(j),
                                           bank.dim());
      a.at(T + i, T + j) = w;
      a.at(T + j, T + i) = w;
    }
  const Tensor ct = class_task_edges(bank, e.alpha_P);
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < T; ++t) {
      a.at(T + c, t) = ct.at(c, t);
      a.at(t, T + c) = ct.at(c, t);
    }
  const double inv_sqrt_d = 1.0 / std::sqrt(double(bank.dim()));
  const Tensor xt = row_softmax(dot_scores(instances, bank.V_T, inv_sqrt_d));
  const Tensor xc = row_softmax(dot_scores(instances, bank.V_C, inv_sqrt_d));
  for (int b = 0; b < B; ++b) {
    const int row = T + C + b;
    for (int t = 0; t < T; ++t) {
      a.at(row, t) = xt.at(b, t);
      a.at(t, row) = xt.at(b, t);
    }
    for (int c = 0; c < C; ++c) {
      a.at(row, T + c) = xc.at(b, c);
      a.at(T + c, row) = xc.at(b, c);
    }
    a.at(row, row) = 1.0;  // no instance-instance edges beyond self
  }

  g.read_mask.assign(size_t(N) * N, 0);
  for (int i = 0; i < N; ++i) {
    const bool is_instance = i >= T + C;
    for (int j = 0; j < T + C; ++j) g.read_mask[size_t(i) * N + j] = 1;
    if (is_instance) g.read_mask[size_t(i) * N + i] = 1;
  }
  return g;
}

// Top-k neighbors per node, ranked by adjacency weight, ties broken by the
// lower node index. Diagonal entries participate, so nodes may select
// themselves.
inline std::vector<std::vector<int>> topk_neighbors(const Tensor& a, int k) {
  check_shape(a.rows == a.cols, "topk_neighbors: adjacency not square");
  if (k < 1 || k > a.rows)
    throw DataError("topk_neighbors: k out of range [1, " +
                    std::to_string(a.rows) + "]");
  std::vector<std::vector<int>> out(a.rows);
  std::vector<int> order(a.rows);
  for (int i = 0; i < a.rows; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
      return a.at(i, x) > a.at(i, y);
    });
    out[i] = std::vector<int>(order.begin(), order.begin() + k);
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

// Masked variant used by propagation: candidates are the readable columns of
// each row and neighborhoods have min(k, #candidates) members.
inline std::vector<std::vector<int>> topk_neighbors(const AssociationGraph& g,
                                                    int k) {
  if (k < 1) throw DataError("topk_neighbors: k must be >= 1");
  const int n = g.nodes();
  std::vector<std::vector<int>> out(n);
  std::vector<int> cand;
  for (int i = 0; i < n; ++i) {
    cand.clear();
    for (int j = 0; j < n; ++j)
      if (g.may_read(i, j)) cand.push_back(j);
    const int kk = std::min<int>(k, int(cand.size()));
    std::stable_sort(cand.begin(), cand.end(), [&](int x, int y) {
      return g.adjacency.at(i, x) > g.adjacency.at(i, y);
    });
    out[i] = std::vector<int>(cand.begin(), cand.begin() + kk);
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

}  // namespace mtcs
