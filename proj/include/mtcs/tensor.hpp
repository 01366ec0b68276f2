#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mtcs/common.hpp"

namespace mtcs {

// Dense row-major matrix of doubles. Row vectors are 1 x n tensors; a linear
// map is applied as X * W with W shaped (in x out).
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0)
      : rows(r), cols(c), a(size_t(r) * size_t(c), fill) {}

  double& at(int r, int c) { return a[size_t(r) * cols + c]; }
  double at(int r, int c) const { return a[size_t(r) * cols + c]; }
  const double* row_ptr(int r) const { return a.data() + size_t(r) * cols; }
  double* row_ptr(int r) { return a.data() + size_t(r) * cols; }
  int size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }

  static Tensor from_row(const std::vector<double>& v) {
    Tensor t(1, int(v.size()));
    t.a = v;
    return t;
  }
  std::vector<double> row_vec(int r) const {
    return std::vector<double>(row_ptr(r), row_ptr(r) + cols);
  }
};

inline void check_shape(bool ok, const std::string& what) {
  if (!ok) throw DataError("dimension mismatch: " + what);
}

inline Tensor matmul(const Tensor& x, const Tensor& w) {
  check_shape(x.cols == w.rows, "matmul");
  Tensor y(x.rows, w.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int k = 0; k < x.cols; ++k) {
      const double xv = x.at(i, k);
      if (xv == 0.0) continue;
      const double* wr = w.row_ptr(k);
      double* yr = y.row_ptr(i);
      for (int j = 0; j < w.cols; ++j) yr[j] += xv * wr[j];
    }
  }
  return y;
}

inline Tensor transpose(const Tensor& x) {
  Tensor y(x.cols, x.rows);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) y.at(j, i) = x.at(i, j);
  return y;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_shape(a.same_shape(b), "add");
  Tensor y = a;
  for (int i = 0; i < y.size(); ++i) y.a[i] += b.a[i];
  return y;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_shape(a.same_shape(b), "sub");
  Tensor y = a;
  for (int i = 0; i < y.size(); ++i) y.a[i] -= b.a[i];
  return y;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor y = a;
  for (double& v : y.a) v *= s;
  return y;
}

inline Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  check_shape(row.rows == 1 && row.cols == a.cols, "add_rowvec");
  Tensor y = a;
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) y.at(i, j) += row.a[j];
  return y;
}

inline Tensor relu(const Tensor& a) {
  Tensor y = a;
  for (double& v : y.a) v = v > 0.0 ? v : 0.0;
  return y;
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check_shape(a.rows == b.rows, "concat_cols");
  Tensor y(a.rows, a.cols + b.cols);
  for (int i = 0; i < a.rows; ++i) {
    std::copy(a.row_ptr(i), a.row_ptr(i) + a.cols, y.row_ptr(i));
    std::copy(b.row_ptr(i), b.row_ptr(i) + b.cols, y.row_ptr(i) + a.cols);
  }
  return y;
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  check_shape(a.cols == b.cols, "concat_rows");
  Tensor y(a.rows + b.rows, a.cols);
  std::copy(a.a.begin(), a.a.end(), y.a.begin());
  std::copy(b.a.begin(), b.a.end(), y.a.begin() + a.a.size());
  return y;
}

inline Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
  Tensor y(int(idx.size()), a.cols);
  for (size_t i = 0; i < idx.size(); ++i) {
    check_shape(idx[i] >= 0 && idx[i] < a.rows, "gather_rows index");
    std::copy(a.row_ptr(idx[i]), a.row_ptr(idx[i]) + a.cols, y.row_ptr(int(i)));
  }
  return y;
}

// Mean of a subset of rows; the subset must be nonempty.
inline Tensor rows_mean(const Tensor& a, const std::vector<int>& idx) {
  check_shape(!idx.empty(), "rows_mean: empty subset");
  Tensor y(1, a.cols);
  for (int r : idx)
    for (int j = 0; j < a.cols; ++j) y.a[j] += a.at(r, j);
  const double inv = 1.0 / double(idx.size());
  for (double& v : y.a) v *= inv;
  return y;
}

// Row-wise softmax with max subtraction.
inline Tensor row_softmax(const Tensor& scores) {
  Tensor p = scores;
  for (int i = 0; i < p.rows; ++i) {
    double* r = p.row_ptr(i);
    double mx = r[0];
    for (int j = 1; j < p.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (int j = 0; j < p.cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    for (int j = 0; j < p.cols; ++j) r[j] /= sum;
  }
  return p;
}

// Scores s[c][t] = -||(K_c - V_t) / alpha||^2 / 2.
inline Tensor gauss_scores(const Tensor& k, const Tensor& v, double alpha) {
  check_shape(k.cols == v.cols, "gauss_scores");
  Tensor s(k.rows, v.rows);
  const double inv_a2 = 1.0 / (alpha * alpha);
  for (int c = 0; c < k.rows; ++c) {
    for (int t = 0; t < v.rows; ++t) {
      double q = 0.0;
      for (int j = 0; j < k.cols; ++j) {
        const double d = k.at(c, j) - v.at(t, j);
        q += d * d;
      }
      s.at(c, t) = -0.5 * q * inv_a2;
    }
  }
  return s;
}

// Scores s[i][t] = scale * <X_i, V_t>.
inline Tensor dot_scores(const Tensor& x, const Tensor& v, double scale) {
  check_shape(x.cols == v.cols, "dot_scores");
  Tensor s(x.rows, v.rows);
  for (int i = 0; i < x.rows; ++i) {
    for (int t = 0; t < v.rows; ++t) {
      double q = 0.0;
      for (int j = 0; j < x.cols; ++j) q += x.at(i, j) * v.at(t, j);
      s.at(i, t) = q * scale;
    }
  }
  return s;
}

// Unweighted mean over each node's neighbor rows.
inline Tensor neighbor_mean(const Tensor& m,
                            const std::vector<std::vector<int>>& nbrs) {
  check_shape(int(nbrs.size()) == m.rows, "neighbor_mean");
  Tensor y(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    check_shape(!nbrs[i].empty(), "neighbor_mean: empty neighborhood");
    for (int j : nbrs[i])
      for (int c = 0; c < m.cols; ++c) y.at(i, c) += m.at(j, c);
    const double inv = 1.0 / double(nbrs[i].size());
    for (int c = 0; c < m.cols; ++c) y.at(i, c) *= inv;
  }
  return y;
}

inline double logistic(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

}  // namespace mtcs
