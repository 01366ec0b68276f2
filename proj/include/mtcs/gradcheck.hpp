#pragma once

#include <string>
#include <vector>

#include "mtcs/objective.hpp"

namespace mtcs {

// Central finite differences of total_loss over the flat parameter
// enumeration. Forward-only evaluations; independent of the reverse pass.
inline std::vector<double> finite_difference_gradient(ParamStore params,
                                                      const NodeBank& bank,
                                                      const Batch& batch,
                                                      const LossConfig& cfg,
                                                      double step = 1e-5) {
  const int n = params.num_params();
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) {
    const double orig = params.get_flat(i);
    params.set_flat(i, orig + step);
    const double up = total_loss(params, bank, batch, cfg).total;
    params.set_flat(i, orig - step);
    const double dn = total_loss(params, bank, batch, cfg).total;
    params.set_flat(i, orig);
    g[i] = (up - dn) / (2.0 * step);
  }
  return g;
}

struct GradCheckSetup {
  int T = 2, C = 3, B = 2, d = 2, d_in = 3, L = 1;
  int hidden_layers = 2;
  int k = 0;
  double beta = 0.1;
  double alpha_t = 0, alpha_c = 0, alpha_p = 0;
  uint64_t seed = 7;
};

struct GradCheckResult {
  int n_params = 0;
  double max_rel_err = 0.0;
  int worst_index = -1;
  std::string worst_name;
  double tolerance = 1e-4;
  bool pass = false;
};

// Builds a small random-but-deterministic configuration (parameters, node
// bank, one mixed batch) and compares the analytic gradient against central
// finite differences, index by index.
inline GradCheckResult run_gradcheck(const GradCheckSetup& s = {},
                                     double tolerance = 1e-4) {
  ModelConfig mc;
  mc.T = s.T;
  mc.C = s.C;
  mc.d_in = s.d_in;
  mc.d = s.d;
  mc.L = s.L;
  mc.hidden.assign(s.hidden_layers, s.d);
  ParamStore params = init_params(mc, splitmix64(s.seed));

  Rng rng = Rng::derive(s.seed, 0x6C4D);
  NodeBank bank(s.T, s.C, s.d);
  for (double& v : bank.V_T.a) v = rng.normal();
  for (double& v : bank.V_C.a) v = rng.normal();
  bank.task_seen.assign(s.T, 1);
  bank.class_seen.assign(s.C, 1);

  Batch batch;
  batch.X = Tensor(s.B, s.d_in);
  for (double& v : batch.X.a) v = rng.normal();
  for (int i = 0; i < s.B; ++i) {
    batch.task_ids.push_back(i % s.T);
    batch.labels.push_back(int(rng.uniform_int(uint64_t(s.C))));
  }

  LossConfig lc;
  lc.k = s.k;
  lc.beta = s.beta;
  lc.alpha_t = s.alpha_t;
  lc.alpha_c = s.alpha_c;
  lc.alpha_p = s.alpha_p;

  const std::vector<double> analytic = gradient(params, bank, batch, lc);
  const std::vector<double> fd = finite_difference_gradient(params, bank, batch, lc);

  GradCheckResult r;
  r.n_params = params.num_params();
  r.tolerance = tolerance;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double rel =
        std::abs(analytic[i] - fd[i]) / std::max(1.0, std::abs(fd[i]));
    if (rel > r.max_rel_err) {
      r.max_rel_err = rel;
      r.worst_index = int(i);
      r.worst_name = params.name_of_flat(int(i));
    }
  }
  r.pass = r.max_rel_err < tolerance;
  return r;
}

}  // namespace mtcs
