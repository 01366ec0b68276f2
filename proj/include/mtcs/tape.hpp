#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "mtcs/tensor.hpp"

namespace mtcs {

// Minimal reverse-mode tape over dense tensors. Nodes are created by the op
// builders below; backward() runs the recorded closures in reverse order.
// Graphs are desk-scale (a few hundred small nodes), so every node keeps a
// dense gradient buffer.
class Tape {
 public:
  using Ref = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Ref constant(Tensor v) { return push(std::move(v), false); }
  Ref leaf(Tensor v) { return push(std::move(v), true); }

  const Tensor& value(Ref r) const { return nodes_[r].val; }
  const Tensor& grad(Ref r) const { return nodes_[r].grad; }

  Ref matmul(Ref a, Ref b) {
    Ref y = push(mtcs::matmul(val(a), val(b)), track(a) || track(b));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, a, b, y] {
      const Tensor& g = nodes_[y].grad;
      if (track(a)) accumulate(a, mtcs::matmul(g, transpose(val(b))));
      if (track(b)) accumulate(b, mtcs::matmul(transpose(val(a)), g));
    };
    return y;
  }

  Ref add(Ref a, Ref b) { return add_scaled(a, b, 1.0, 1.0); }

  Ref add_scaled(Ref a, Ref b, double sa, double sb) {
    check_shape(val(a).same_shape(val(b)), "tape add");
    Tensor v = val(a);
    for (int i = 0; i < v.size(); ++i) v.a[i] = sa * v.a[i] + sb * val(b).a[i];
    Ref y = push(std::move(v), track(a) || track(b));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, a, b, sa, sb, y] {
      if (track(a)) accumulate(a, scale(nodes_[y].grad, sa));
      if (track(b)) accumulate(b, scale(nodes_[y].grad, sb));
    };
    return y;
  }

  Ref scale_by(Ref a, double s) {
    Ref y = push(scale(val(a), s), track(a));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, a, s, y] {
      accumulate(a, scale(nodes_[y].grad, s));
    };
    return y;
  }

  Ref add_rowvec(Ref a, Ref row) {
    Ref y = push(mtcs::add_rowvec(val(a), val(row)), track(a) || track(row));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, a, row, y] {
      const Tensor& g = nodes_[y].grad;
      if (track(a)) accumulate(a, g);
      if (track(row)) {
        Tensor gr(1, g.cols);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) gr.a[j] += g.at(i, j);
        accumulate(row, gr);
      }
    };
    return y;
  }

  Ref relu(Ref a) {
    Ref y = push(mtcs::relu(val(a)), track(a));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, a, y] {
      Tensor g = nodes_[y].grad;
      const Tensor& x = val(a);
      for (int i = 0; i < g.size(); ++i)
        if (x.a[i] <= 0.0) g.a[i] = 0.0;
      accumulate(a, g);
    };
    return y;
  }

  Ref concat_cols(Ref a, Ref b) {
    Ref y = push(mtcs::concat_cols(val(a), val(b)), track(a) || track(b));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, a, b, y] {
      const Tensor& g = nodes_[y].grad;
      const int ca = val(a).cols;
      if (track(a)) {
        Tensor ga(g.rows, ca);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < ca; ++j) ga.at(i, j) = g.at(i, j);
        accumulate(a, ga);
      }
      if (track(b)) {
        Tensor gb(g.rows, g.cols - ca);
        for (int i = 0; i < g.rows; ++i)
          for (int j = ca; j < g.cols; ++j) gb.at(i, j - ca) = g.at(i, j);
        accumulate(b, gb);
      }
    };
    return y;
  }

  Ref concat_rows(Ref a, Ref b) {
    Ref y = push(mtcs::concat_rows(val(a), val(b)), track(a) || track(b));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, a, b, y] {
      const Tensor& g = nodes_[y].grad;
      const int ra = val(a).rows;
      if (track(a)) {
        Tensor ga(ra, g.cols);
        std::copy(g.a.begin(), g.a.begin() + ga.a.size(), ga.a.begin());
        accumulate(a, ga);
      }
      if (track(b)) {
        Tensor gb(g.rows - ra, g.cols);
        std::copy(g.a.begin() + size_t(ra) * g.cols, g.a.end(), gb.a.begin());
        accumulate(b, gb);
      }
    };
    return y;
  }

  Ref gather_rows(Ref a, std::vector<int> idx) {
    Ref y = push(mtcs::gather_rows(val(a), idx), track(a));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, a, idx = std::move(idx), y] {
      const Tensor& g = nodes_[y].grad;
      Tensor ga(val(a).rows, val(a).cols);
      for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < g.cols; ++j) ga.at(idx[i], j) += g.at(int(i), j);
      accumulate(a, ga);
    };
    return y;
  }

  // Per-output-row moving average against a constant base:
  //   out_i = decay_i * base_i + (1 - decay_i) * mean(batch rows in group_i)
  // Rows with an empty group copy base_i and receive no gradient. The base
  // is a constant by contract: only the batch-mean term is differentiable.
  Ref moving_average_rows(Ref batch, const Tensor& base,
                          std::vector<std::vector<int>> groups,
                          std::vector<double> decays) {
    check_shape(int(groups.size()) == base.rows && decays.size() == groups.size(),
                "moving_average_rows");
    Tensor out = base;
    const Tensor& e = val(batch);
    for (int i = 0; i < base.rows; ++i) {
      if (groups[i].empty()) continue;
      Tensor m = rows_mean(e, groups[i]);
      for (int j = 0; j < base.cols; ++j)
        out.at(i, j) = decays[i] * base.at(i, j) + (1.0 - decays[i]) * m.a[j];
    }
    Ref y = push(std::move(out), track(batch));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, batch, groups = std::move(groups),
                      decays = std::move(decays), y] {
      const Tensor& g = nodes_[y].grad;
      Tensor gb(val(batch).rows, val(batch).cols);
      for (size_t i = 0; i < groups.size(); ++i) {
        if (groups[i].empty()) continue;
        const double w = (1.0 - decays[i]) / double(groups[i].size());
        for (int r : groups[i])
          for (int j = 0; j < g.cols; ++j) gb.at(r, j) += w * g.at(int(i), j);
      }
      accumulate(batch, gb);
    };
    return y;
  }

  Ref neighbor_mean(Ref a, std::vector<std::vector<int>> nbrs) {
    Ref y = push(mtcs::neighbor_mean(val(a), nbrs), track(a));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, a, nbrs = std::move(nbrs), y] {
      const Tensor& g = nodes_[y].grad;
      Tensor ga(val(a).rows, val(a).cols);
      for (size_t i = 0; i < nbrs.size(); ++i) {
        const double w = 1.0 / double(nbrs[i].size());
        for (int j : nbrs[i])
          for (int c = 0; c < g.cols; ++c) ga.at(j, c) += w * g.at(int(i), c);
      }
      accumulate(a, ga);
    };
    return y;
  }

  // Row-normalized Gaussian-kernel similarities between the rows of k and v.
  Ref gauss_softmax(Ref k, Ref v, double alpha) {
    Tensor p = row_softmax(gauss_scores(val(k), val(v), alpha));
    Ref y = push(std::move(p), track(k) || track(v));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, k, v, alpha, y] {
      const Tensor& gout = nodes_[y].grad;
      const Tensor& prob = val(y);
      const Tensor& kt = val(k);
      const Tensor& vt = val(v);
      const double inv_a2 = 1.0 / (alpha * alpha);
      Tensor gk(kt.rows, kt.cols), gv(vt.rows, vt.cols);
      for (int c = 0; c < prob.rows; ++c) {
        double dot = 0.0;
        for (int t = 0; t < prob.cols; ++t) dot += gout.at(c, t) * prob.at(c, t);
        for (int t = 0; t < prob.cols; ++t) {
          const double ds = prob.at(c, t) * (gout.at(c, t) - dot);
          if (ds == 0.0) continue;
          for (int j = 0; j < kt.cols; ++j) {
            const double diff = kt.at(c, j) - vt.at(t, j);
            gk.at(c, j) += ds * (-diff * inv_a2);
            gv.at(t, j) += ds * (diff * inv_a2);
          }
        }
      }
      if (track(k)) accumulate(k, gk);
      if (track(v)) accumulate(v, gv);
    };
    return y;
  }

  // Weighted sum of per-row softmax cross-entropies: sum_i w_i * CE(row_i).
  Ref softmax_xent(Ref logits, std::vector<int> labels,
                   std::vector<double> weights) {
    const Tensor& z = val(logits);
    check_shape(int(labels.size()) == z.rows && weights.size() == labels.size(),
                "softmax_xent");
    double loss = 0.0;
    for (int i = 0; i < z.rows; ++i) {
      const double* r = z.row_ptr(i);
      double mx = r[0];
      for (int j = 1; j < z.cols; ++j) mx = std::max(mx, r[j]);
      double sum = 0.0;
      for (int j = 0; j < z.cols; ++j) sum += std::exp(r[j] - mx);
      loss += weights[i] * (std::log(sum) + mx - r[labels[i]]);
    }
    Ref y = push(Tensor(1, 1, loss), track(logits));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, logits, labels = std::move(labels),
                      weights = std::move(weights), y] {
      const double g = nodes_[y].grad.a[0];
      const Tensor& z = val(logits);
      Tensor gz(z.rows, z.cols);
      for (int i = 0; i < z.rows; ++i) {
        const double* r = z.row_ptr(i);
        double mx = r[0];
        for (int j = 1; j < z.cols; ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (int j = 0; j < z.cols; ++j) sum += std::exp(r[j] - mx);
        for (int j = 0; j < z.cols; ++j) {
          double p = std::exp(r[j] - mx) / sum;
          if (j == labels[i]) p -= 1.0;
          gz.at(i, j) = g * weights[i] * p;
        }
      }
      accumulate(logits, gz);
    };
    return y;
  }

  // sum_ij w_ij * a_ij as a 1x1 tensor.
  Ref weighted_sum(Ref a, Tensor w) {
    check_shape(val(a).same_shape(w), "weighted_sum");
    double s = 0.0;
    for (int i = 0; i < w.size(); ++i) s += w.a[i] * val(a).a[i];
    Ref y = push(Tensor(1, 1, s), track(a));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, a, w = std::move(w), y] {
      accumulate(a, scale(w, nodes_[y].grad.a[0]));
    };
    return y;
  }

  // Mean over rows of the Shannon entropy of each simplex row, with the
  // 0*log(0) := 0 convention realized by a clamped log.
  Ref entropy_mean_rows(Ref p) {
    const Tensor& pr = val(p);
    double h = 0.0;
    for (int i = 0; i < pr.rows; ++i)
      for (int j = 0; j < pr.cols; ++j) {
        const double q = pr.at(i, j);
        if (q > 0.0) h -= q * std::log(std::max(q, 1e-30));
      }
    h /= double(pr.rows);
    Ref y = push(Tensor(1, 1, h), track(p));
    if (!tracked(y)) return y;
    nodes_[y].back = [this, p, y] {
      const double g = nodes_[y].grad.a[0] / double(val(p).rows);
      const Tensor& pr = val(p);
      Tensor gp(pr.rows, pr.cols);
      for (int i = 0; i < gp.size(); ++i)
        gp.a[i] = -g * (std::log(std::max(pr.a[i], 1e-30)) + 1.0);
      accumulate(p, gp);
    };
    return y;
  }

  void backward(Ref scalar) {
    check_shape(val(scalar).size() == 1, "backward: not a scalar");
    for (auto& n : nodes_) std::fill(n.grad.a.begin(), n.grad.a.end(), 0.0);
    nodes_[scalar].grad.a[0] = 1.0;
    for (int i = scalar; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back();
  }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool tracked = false;
    std::function<void()> back;
  };

  const Tensor& val(Ref r) const { return nodes_[r].val; }
  bool track(Ref r) const { return nodes_[r].tracked; }
  bool tracked(Ref r) const { return nodes_[r].tracked; }

  Ref push(Tensor v, bool tracked) {
    Node n;
    n.grad = Tensor(v.rows, v.cols);
    n.val = std::move(v);
    n.tracked = tracked;
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  void accumulate(Ref r, const Tensor& g) {
    Tensor& dst = nodes_[r].grad;
    check_shape(dst.same_shape(g), "grad accumulate");
    for (int i = 0; i < dst.size(); ++i) dst.a[i] += g.a[i];
  }

  std::vector<Node> nodes_;
};

}  // namespace mtcs
