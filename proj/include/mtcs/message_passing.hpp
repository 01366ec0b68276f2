#pragma once

#include <vector>

#include "mtcs/graph.hpp"
#include "mtcs/model.hpp"
#include "mtcs/tape.hpp"
#include "mtcs/tensor.hpp"

namespace mtcs {

// One GraphSAGE-style layer: mean of ReLU(W m) over the neighborhood,
// concatenated with the previous embedding and combined by U. No
// nonlinearity after the combine.
struct GnnLayer {
  Tensor W;  // d x d
  Tensor U;  // 2d x d
};

// Applies the read mask (when nonempty) to each neighborhood; a node whose
// masked neighborhood is empty falls back to aggregating itself only.
inline std::vector<std::vector<int>> effective_neighborhoods(
    int n, const std::vector<std::vector<int>>& nbrs,
    const std::vector<uint8_t>& mask) {
  check_shape(int(nbrs.size()) == n, "neighborhoods: wrong node count");
  std::vector<std::vector<int>> eff(n);
  for (int i = 0; i < n; ++i) {
    for (int j : nbrs[i]) {
      check_shape(j >= 0 && j < n, "neighborhood index out of range");
      if (mask.empty() || mask[size_t(i) * n + j]) eff[i].push_back(j);
    }
    if (eff[i].empty()) eff[i].push_back(i);
  }
  return eff;
}

inline Tensor layer_forward(const GnnLayer& layer, const Tensor& h,
                            const std::vector<std::vector<int>>& nbrs,
                            const std::vector<uint8_t>& mask = {}) {
  check_shape(h.cols == layer.W.rows && layer.W.cols == h.cols, "gnn W shape");
  check_shape(layer.U.rows == 2 * h.cols && layer.U.cols == h.cols, "gnn U shape");
  const auto eff = effective_neighborhoods(h.rows, nbrs, mask);
  const Tensor agg = neighbor_mean(relu(matmul(h, layer.W)), eff);
  return matmul(concat_cols(agg, h), layer.U);
}

struct PropagateResult {
  Tensor all_nodes;  // (T+C+B) x d after L layers
  Tensor instances;  // B x d, the enhanced instance features
};

// L applications of layer_forward over a fixed neighborhood structure
// computed once from the assembled adjacency. L = 0 returns the inputs.
inline PropagateResult propagate(const std::vector<GnnLayer>& layers,
                                 const AssociationGraph& g, int k) {
  const int n = g.nodes();
  std::vector<int> inst_rows(g.B);
  for (int b = 0; b < g.B; ++b) inst_rows[b] = g.T + g.C + b;
  Tensor h = g.node_features;
  if (!layers.empty()) {
    const int kk = k <= 0 ? n : std::min(k, n);
    const auto nbrs = topk_neighbors(g, kk);
    for (const auto& layer : layers) h = layer_forward(layer, h, nbrs);
  }
  PropagateResult out;
  out.instances = gather_rows(h, inst_rows);
  out.all_nodes = std::move(h);
  return out;
}

inline std::vector<GnnLayer> gnn_layers(const ParamStore& p) {
  std::vector<GnnLayer> layers;
  for (size_t l = 0; l < p.gnn_W.size(); ++l)
    layers.push_back({p.gnn_W[l], p.gnn_U[l]});
  return layers;
}

// Tape twin of layer_forward/propagate for training.
inline Tape::Ref propagate_node(Tape& tape, const ParamRefs& refs, Tape::Ref h0,
                                const std::vector<std::vector<int>>& nbrs) {
  Tape::Ref h = h0;
  for (size_t l = 0; l < refs.gnn_W.size(); ++l) {
    Tape::Ref agg =
        tape.neighbor_mean(tape.relu(tape.matmul(h, refs.gnn_W[l])), nbrs);
    h = tape.matmul(tape.concat_cols(agg, h), refs.gnn_U[l]);
  }
  return h;
}

}  // namespace mtcs
