#include <gtest/gtest.h>

#include <cmath>

#include "mtcs/graph.hpp"
#include "mtcs/message_passing.hpp"

using namespace mtcs;

namespace {

Tensor randn(Rng& rng, int r, int c, double scale = 1.0) {
  Tensor t(r, c);
  for (double& v : t.a) v = scale * rng.normal();
  return t;
}

GnnLayer random_layer(Rng& rng, int d) {
  return {randn(rng, d, d, 0.5), randn(rng, 2 * d, d, 0.5)};
}

// Direct transcription of the layer rule with plain loops: mean of
// ReLU(W h_j) over the neighborhood, concat with h_i, combine with U.
Tensor brute_force_layer(const GnnLayer& layer, const Tensor& h,
                         const std::vector<std::vector<int>>& nbrs) {
  const int n = h.rows, d = h.cols;
  Tensor out(n, d);
  for (int i = 0; i < n; ++i) {
    std::vector<double> agg(d, 0.0);
    for (int j : nbrs[i]) {
      for (int c = 0; c < d; ++c) {
        double m = 0;
        for (int k = 0; k < d; ++k) m += h.at(j, k) * layer.W.at(k, c);
        agg[c] += std::max(0.0, m);
      }
    }
    for (int c = 0; c < d; ++c) agg[c] /= double(nbrs[i].size());
    for (int c = 0; c < d; ++c) {
      double v = 0;
      for (int k = 0; k < d; ++k) v += agg[k] * layer.U.at(k, c);
      for (int k = 0; k < d; ++k) v += h.at(i, k) * layer.U.at(d + k, c);
      out.at(i, c) = v;
    }
  }
  return out;
}

std::vector<std::vector<int>> random_neighborhoods(Rng& rng, int n) {
  std::vector<std::vector<int>> nbrs(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      if (rng.uniform() < 0.5) nbrs[i].push_back(j);
    if (nbrs[i].empty()) nbrs[i].push_back(i);
  }
  return nbrs;
}

}  // namespace

TEST(LayerForward, ZeroMessageTransformLeavesOnlySelfPath) {
  Rng rng(1);
  const int d = 3;
  GnnLayer layer{Tensor(d, d), randn(rng, 2 * d, d)};
  const Tensor h = randn(rng, 4, d);
  const auto nbrs = random_neighborhoods(rng, 4);
  const Tensor out = layer_forward(layer, h, nbrs);
  const Tensor expect = matmul(concat_cols(Tensor(4, d), h), layer.U);
  EXPECT_EQ(out.a, expect.a);
}

TEST(LayerForward, SingleNodeHandOracle) {
  GnnLayer layer;
  layer.W = Tensor(1, 1, 1.0);
  layer.U = Tensor(2, 1, 1.0);
  Tensor h(1, 1, 2.0);
  const Tensor out = layer_forward(layer, h, {{0}});
  EXPECT_EQ(out.at(0, 0), 4.0);  // mean(ReLU(2)) + 2
}

TEST(LayerForward, MatchesBruteForceOnRandomGraphs) {
  Rng rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 2 + int(rng.uniform_int(8));
    const int d = 1 + int(rng.uniform_int(4));
    const GnnLayer layer = random_layer(rng, d);
    const Tensor h = randn(rng, n, d);
    const auto nbrs = random_neighborhoods(rng, n);
    const Tensor got = layer_forward(layer, h, nbrs);
    const Tensor expect = brute_force_layer(layer, h, nbrs);
    for (int i = 0; i < got.size(); ++i)
      ASSERT_NEAR(got.a[i], expect.a[i], 1e-12);
  }
}

TEST(LayerForward, MaskFiltersAndFallsBackToSelf) {
  Rng rng(3);
  const int d = 2, n = 3;
  const GnnLayer layer = random_layer(rng, d);
  const Tensor h = randn(rng, n, d);
  const std::vector<std::vector<int>> nbrs = {{0, 1, 2}, {0, 2}, {0, 1, 2}};
  std::vector<uint8_t> mask(n * n, 0);
  mask[0 * n + 1] = 1;  // node 0 may read node 1 only
  // node 1 may read nothing -> self fallback; node 2 reads everything
  for (int j = 0; j < n; ++j) mask[2 * n + j] = 1;
  const Tensor got = layer_forward(layer, h, nbrs, mask);
  const Tensor expect = brute_force_layer(layer, h, {{1}, {1}, {0, 1, 2}});
  for (int i = 0; i < got.size(); ++i) ASSERT_NEAR(got.a[i], expect.a[i], 1e-12);
}

TEST(LayerForward, PermutationEquivariance) {
  Rng rng(4);
  const int n = 5, d = 3;
  const GnnLayer layer = random_layer(rng, d);
  const Tensor h = randn(rng, n, d);
  const auto nbrs = random_neighborhoods(rng, n);
  const Tensor base = layer_forward(layer, h, nbrs);

  std::vector<int> perm = {3, 0, 4, 1, 2};  // node i -> position perm[i]
  Tensor hp(n, d);
  std::vector<std::vector<int>> nbrs_p(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) hp.at(perm[i], j) = h.at(i, j);
    for (int j : nbrs[i]) nbrs_p[perm[i]].push_back(perm[j]);
    std::sort(nbrs_p[perm[i]].begin(), nbrs_p[perm[i]].end());
  }
  const Tensor out = layer_forward(layer, hp, nbrs_p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      ASSERT_NEAR(out.at(perm[i], j), base.at(i, j), 1e-12);
}

TEST(Propagate, ZeroLayersIsIdentity) {
  Rng rng(5);
  ModelConfig mc;
  mc.T = 2;
  mc.C = 3;
  mc.d_in = 2;
  mc.d = 2;
  mc.L = 0;
  ParamStore p = init_params(mc, 1);
  NodeBank bank(randn(rng, 2, 2), randn(rng, 3, 2));
  const Tensor inst = randn(rng, 2, 2);
  const AssociationGraph g = assemble(bank, edge_params(p, 0, 0, 0), inst, {0, 1});
  const PropagateResult out = propagate({}, g, 0);
  EXPECT_EQ(out.instances.a, inst.a);
  EXPECT_EQ(out.all_nodes.a, g.node_features.a);
}

TEST(Propagate, TwoLayersOnOneNodeIterateTheHandOracle) {
  GnnLayer layer;
  layer.W = Tensor(1, 1, 1.0);
  layer.U = Tensor(2, 1, 1.0);
  Tensor h(1, 1, 2.0);
  Tensor step1 = layer_forward(layer, h, {{0}});
  Tensor step2 = layer_forward(layer, step1, {{0}});
  EXPECT_EQ(step1.at(0, 0), 4.0);
  EXPECT_EQ(step2.at(0, 0), 8.0);
}

TEST(Propagate, MatchesManualLayerIteration) {
  Rng rng(6);
  ModelConfig mc;
  mc.T = 2;
  mc.C = 3;
  mc.d_in = 3;
  mc.d = 3;
  mc.L = 2;
  ParamStore p = init_params(mc, 7);
  NodeBank bank(randn(rng, 2, 3), randn(rng, 3, 3));
  const Tensor inst = randn(rng, 2, 3);
  const AssociationGraph g = assemble(bank, edge_params(p, 0, 0, 0), inst, {0, 1});
  const auto layers = gnn_layers(p);
  const PropagateResult out = propagate(layers, g, 0);

  const auto nbrs = topk_neighbors(g, g.nodes());
  Tensor h = g.node_features;
  for (const auto& layer : layers) h = layer_forward(layer, h, nbrs);
  EXPECT_EQ(out.all_nodes.a, h.a);
  EXPECT_EQ(out.instances.row_vec(0), h.row_vec(5));
}

TEST(Propagate, TaskAndClassRowsIndependentOfBatchComposition) {
  Rng rng(7);
  ModelConfig mc;
  mc.T = 2;
  mc.C = 3;
  mc.d_in = 3;
  mc.d = 3;
  mc.L = 3;
  ParamStore p = init_params(mc, 8);
  NodeBank bank(randn(rng, 2, 3), randn(rng, 3, 3));
  const EdgeParams e = edge_params(p, 0, 0, 0);
  const auto layers = gnn_layers(p);

  const Tensor x1 = randn(rng, 1, 3);
  const Tensor batch2 = concat_rows(x1, randn(rng, 1, 3));

  const PropagateResult solo = propagate(layers, assemble(bank, e, x1, {0}), 0);
  const PropagateResult duo =
      propagate(layers, assemble(bank, e, batch2, {0, 1}), 0);

  for (int i = 0; i < 5; ++i)
    EXPECT_EQ(solo.all_nodes.row_vec(i), duo.all_nodes.row_vec(i)) << "row " << i;
  // the shared instance is also untouched by its batch peer
  EXPECT_EQ(solo.instances.row_vec(0), duo.instances.row_vec(0));
}
