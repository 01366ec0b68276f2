#pragma once

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "mtcs/dataset.hpp"
#include "mtcs/objective.hpp"

namespace mtcs {

enum class Optimizer { sgd, sgd_momentum };

struct TrainConfig {
  int d = 16;
  int L = 4;
  int k = 0;             // 0 = full graph
  int hidden_layers = 2; // extractor hidden layers, each of width d
  double beta = 0.1;
  double alpha_t = 0;    // <= 0 resolves to sqrt(d)
  double alpha_c = 0;
  double alpha_p = 0;
  double lr = 0.05;
  int batch_per_task = 8;
  int iterations = 2000;
  uint64_t seed = 1;
  Optimizer optimizer = Optimizer::sgd;
};

inline void validate_train_config(const TrainConfig& c) {
  if (c.d < 1 || c.L < 0 || c.k < 0 || c.hidden_layers < 0)
    throw ConfigError("train config: bad dimensions");
  if (!(c.beta >= 0.0) || !std::isfinite(c.beta))
    throw ConfigError("train config: beta must be >= 0");
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr))
    throw ConfigError("train config: learning rate must be >= 0");
  if (c.batch_per_task < 1) throw ConfigError("train config: batch size must be >= 1");
  if (c.iterations < 0) throw ConfigError("train config: iterations must be >= 0");
}

inline LossConfig loss_config(const TrainConfig& c) {
  LossConfig lc;
  lc.k = c.k;
  lc.beta = c.beta;
  lc.alpha_t = c.alpha_t;
  lc.alpha_c = c.alpha_c;
  lc.alpha_p = c.alpha_p;
  return lc;
}

inline ModelConfig model_config(const DatasetManifest& m, const TrainConfig& c) {
  ModelConfig mc;
  mc.T = m.T;
  mc.C = m.C;
  mc.d_in = m.d_in;
  mc.d = c.d;
  mc.L = c.L;
  mc.hidden.assign(c.hidden_layers, c.d);
  return mc;
}

// Without-replacement sampling per pool and epoch; pools are reshuffled when
// exhausted. Draw order is task-major and deterministic per seed.
class EpochSampler {
 public:
  EpochSampler(std::vector<std::vector<int>> pools, uint64_t seed)
      : pools_(std::move(pools)), cursors_(pools_.size(), 0),
        rng_(Rng::derive(seed, 0xBA7C4)) {
    for (auto& p : pools_)
      if (p.empty()) throw ConfigError("sampler: empty pool");
    for (auto& p : pools_) rng_.shuffle(p);
  }

  std::vector<int> next(int per_pool) {
    std::vector<int> out;
    out.reserve(per_pool * pools_.size());
    for (size_t t = 0; t < pools_.size(); ++t) {
      for (int n = 0; n < per_pool; ++n) {
        if (cursors_[t] == pools_[t].size()) {
          rng_.shuffle(pools_[t]);
          cursors_[t] = 0;
        }
        out.push_back(pools_[t][cursors_[t]++]);
      }
    }
    return out;
  }

 private:
  std::vector<std::vector<int>> pools_;
  std::vector<size_t> cursors_;
  Rng rng_;
};

struct TrainLogEntry {
  int iter = 0;
  double ce = 0, ae = 0, total = 0, avg_entropy = 0;
};

struct TrainResult {
  ModelKind kind = ModelKind::graph;
  ParamStore params;
  NodeBank bank;
  std::vector<TrainLogEntry> log;
};

namespace detail {

class SgdStepper {
 public:
  SgdStepper(Optimizer opt, double lr, int n)
      : opt_(opt), lr_(lr), velocity_(opt == Optimizer::sgd_momentum ? n : 0, 0.0) {}

  void step(ParamStore& p, const std::vector<double>& g) {
    int i = 0;
    if (opt_ == Optimizer::sgd) {
      for (auto& [name, t] : p.named_tensors())
        for (double& v : t->a) v -= lr_ * g[i++];
    } else {
      for (auto& [name, t] : p.named_tensors())
        for (double& v : t->a) {
          velocity_[i] = 0.9 * velocity_[i] + g[i];
          v -= lr_ * velocity_[i];
          ++i;
        }
    }
  }

 private:
  Optimizer opt_;
  double lr_;
  std::vector<double> velocity_;
};

inline std::vector<std::vector<int>> per_task_train_pools(
    const DatasetManifest& m, const std::vector<LabeledRecord>& records) {
  std::vector<std::vector<int>> pools(m.T);
  for (size_t i = 0; i < records.size(); ++i)
    if (records[i].split == Split::train)
      pools[records[i].task_id].push_back(int(i));
  return pools;
}

}  // namespace detail

// Full training loop: per-task batches, moving-average node updates, graph
// assembly and propagation, joint loss, plain gradient steps.
inline TrainResult train(const DatasetManifest& manifest,
                         const std::vector<LabeledRecord>& records,
                         const TrainConfig& cfg) {
  validate_train_config(cfg);
  validate_manifest(manifest);
  auto pools = detail::per_task_train_pools(manifest, records);
  for (int t = 0; t < manifest.T; ++t)
    if (pools[t].empty())
      throw ConfigError("task " + std::to_string(t) +
                        " has no training data after the shift");
  for (const auto& r : records)
    if (r.split == Split::train && !manifest.observes(r.task_id, r.class_id))
      throw DataError("train record violates the observed-class contract");

  const ModelConfig mc = model_config(manifest, cfg);
  TrainResult out;
  out.kind = ModelKind::graph;
  out.params = init_params(mc, splitmix64(cfg.seed));
  out.bank = NodeBank(mc.T, mc.C, mc.d);
  const LossConfig lc = loss_config(cfg);

  EpochSampler sampler(pools, cfg.seed);
  detail::SgdStepper stepper(cfg.optimizer, cfg.lr, out.params.num_params());
  for (int it = 0; it < cfg.iterations; ++it) {
    const Batch batch = make_batch(manifest, records,
                                   sampler.next(cfg.batch_per_task));
    Tape tape;
    const ForwardHandles h =
        build_training_forward(tape, out.params, out.bank, batch, lc);
    tape.backward(h.total);
    const std::vector<double> g = collect_flat_grad(tape, h.refs);
    for (size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        throw NumericError("non-finite gradient at parameter " +
                           out.params.name_of_flat(int(i)) + " (iteration " +
                           std::to_string(it) + ")");
    stepper.step(out.params, g);

    out.bank.V_T = tape.value(h.updated_vt);
    out.bank.V_C = tape.value(h.updated_vc);
    out.bank.task_seen = h.new_task_seen;
    out.bank.class_seen = h.new_class_seen;

    const LossBreakdown b = read_breakdown(tape, h);
    out.log.push_back({it, b.ce, b.ae, b.total, b.average_assignment_entropy});
  }
  return out;
}

// ERM baseline: one shared extractor and one shared classifier trained on the
// pooled data of all tasks. No graph, no node bank.
inline TrainResult train_erm_baseline(const DatasetManifest& manifest,
                                      const std::vector<LabeledRecord>& records,
                                      const TrainConfig& cfg) {
  validate_train_config(cfg);
  validate_manifest(manifest);
  std::vector<int> pool;
  for (size_t i = 0; i < records.size(); ++i)
    if (records[i].split == Split::train) pool.push_back(int(i));
  if (pool.empty()) throw ConfigError("no training data");

  ModelConfig mc = model_config(manifest, cfg);
  mc.T = 1;
  mc.L = 0;
  TrainResult out;
  out.kind = ModelKind::erm;
  out.params = init_params(mc, splitmix64(cfg.seed));

  // Same per-iteration data budget as the graph model.
  const int batch_size = cfg.batch_per_task * manifest.T;
  EpochSampler sampler({pool}, cfg.seed);
  detail::SgdStepper stepper(cfg.optimizer, cfg.lr, out.params.num_params());
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto idx = sampler.next(batch_size);
    Batch batch;
    batch.X = Tensor(int(idx.size()), mc.d_in);
    for (size_t i = 0; i < idx.size(); ++i) {
      const LabeledRecord& r = records[idx[i]];
      std::copy(r.features.begin(), r.features.end(), batch.X.row_ptr(int(i)));
      batch.labels.push_back(r.class_id);
      batch.task_ids.push_back(0);
    }
    Tape tape;
    ParamRefs refs = make_param_refs(tape, out.params);
    const Tape::Ref x = tape.constant(batch.X);
    const Tape::Ref e = embed_batch_node(tape, refs, out.params.ext_W.size(), x);
    const Tape::Ref logits =
        tape.add_rowvec(tape.matmul(e, refs.cls_W[0]), refs.cls_b[0]);
    const std::vector<double> w(batch.labels.size(),
                                1.0 / double(batch.labels.size()));
    const Tape::Ref ce = tape.softmax_xent(logits, batch.labels, w);
    tape.backward(ce);
    const std::vector<double> g = collect_flat_grad(tape, refs);
    for (size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        throw NumericError("non-finite gradient at parameter " +
                           out.params.name_of_flat(int(i)));
    stepper.step(out.params, g);
    const double ce_v = tape.value(ce).a[0];
    out.log.push_back({it, ce_v, 0.0, ce_v, 0.0});
  }
  return out;
}

inline std::string format_train_log(const std::vector<TrainLogEntry>& log) {
  std::string s = "iter\tce\tae\ttotal\tavg_entropy\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d\t%.10g\t%.10g\t%.10g\t%.10g\n", e.iter,
                  e.ce, e.ae, e.total, e.avg_entropy);
    s += buf;
  }
  return s;
}

}  // namespace mtcs
