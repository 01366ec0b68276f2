#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mtcs/dataset.hpp"
#include "mtcs/graph.hpp"
#include "mtcs/message_passing.hpp"
#include "mtcs/model.hpp"
#include "mtcs/tape.hpp"

namespace mtcs {

struct LossConfig {
  int k = 0;           // top-k neighborhood size; <= 0 means the full graph
  double beta = 0.1;   // weight of the assignment-entropy term
  double alpha_t = 0;  // <= 0 resolves to sqrt(d)
  double alpha_c = 0;
  double alpha_p = 0;
};

struct LossBreakdown {
  double ce = 0.0;     // mean per-task cross-entropy
  double ae = 0.0;     // mean per-class assignment entropy (positive)
  double total = 0.0;  // ce - beta * ae
  double average_assignment_entropy = 0.0;
};

inline double cross_entropy(const std::vector<double>& logits, int label) {
  if (label < 0 || label >= int(logits.size()))
    throw DataError("cross_entropy: label out of range");
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  return std::log(sum) + mx - logits[label];
}

// Shannon entropy of a simplex row, 0*log(0) := 0 via a clamped log.
inline double assignment_entropy(const std::vector<double>& row) {
  double sum = 0.0;
  for (double p : row) {
    if (p < 0.0) throw DataError("assignment_entropy: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw DataError("assignment_entropy: row does not sum to 1");
  double h = 0.0;
  for (double p : row)
    if (p > 0.0) h -= p * std::log(std::max(p, 1e-30));
  return h;
}

struct Batch {
  Tensor X;  // B x d_in raw features
  std::vector<int> labels;
  std::vector<int> task_ids;

  int size() const { return X.rows; }
};

// Training batches must respect the manifest: every label observed for its
// task.
inline Batch make_batch(const DatasetManifest& m,
                        const std::vector<LabeledRecord>& records,
                        const std::vector<int>& indices) {
  if (indices.empty()) throw DataError("batch: empty");
  Batch b;
  b.X = Tensor(int(indices.size()), m.d_in);
  for (size_t i = 0; i < indices.size(); ++i) {
    const LabeledRecord& r = records[indices[i]];
    if (int(r.features.size()) != m.d_in)
      throw DataError("batch: feature length != D");
    if (r.task_id < 0 || r.task_id >= m.T || r.class_id < 0 || r.class_id >= m.C)
      throw DataError("batch: task or class id outside manifest range");
    if (!m.observes(r.task_id, r.class_id))
      throw DataError("batch: class " + std::to_string(r.class_id) +
                      " not observed by task " + std::to_string(r.task_id) +
                      " (training contract)");
    std::copy(r.features.begin(), r.features.end(), b.X.row_ptr(int(i)));
    b.labels.push_back(r.class_id);
    b.task_ids.push_back(r.task_id);
  }
  return b;
}

struct ForwardHandles {
  ParamRefs refs;
  Tape::Ref embeddings = -1;
  Tape::Ref updated_vt = -1;
  Tape::Ref updated_vc = -1;
  Tape::Ref instances = -1;
  Tape::Ref ce = -1;
  Tape::Ref ae = -1;
  Tape::Ref total = -1;
  std::vector<uint8_t> new_task_seen, new_class_seen;
};

// One training-time pass: embed, update nodes by moving average, assemble,
// propagate, classify, combine the losses. The bank rows entering the moving
// average are constants; gradient reaches the extractor through the
// batch-mean term only.
inline ForwardHandles build_training_forward(Tape& tape, const ParamStore& params,
                                             const NodeBank& bank,
                                             const Batch& batch,
                                             const LossConfig& cfg) {
  const ModelConfig& mc = params.cfg;
  check_shape(bank.tasks() == mc.T && bank.classes() == mc.C && bank.dim() == mc.d,
              "bank shape vs model config");
  if (batch.size() < 1) throw DataError("training batch is empty");

  ForwardHandles h;
  h.refs = make_param_refs(tape, params);
  const Tape::Ref x = tape.constant(batch.X);
  h.embeddings = embed_batch_node(tape, h.refs, params.ext_W.size(), x);

  std::vector<std::vector<int>> task_groups(mc.T), class_groups(mc.C);
  for (int i = 0; i < batch.size(); ++i) {
    task_groups[batch.task_ids[i]].push_back(i);
    class_groups[batch.labels[i]].push_back(i);
  }
  std::vector<double> task_decay(mc.T), class_decay(mc.C);
  h.new_task_seen = bank.task_seen;
  h.new_class_seen = bank.class_seen;
  for (int t = 0; t < mc.T; ++t) {
    task_decay[t] = bank.task_seen[t] ? bank.decay : 0.0;
    if (!task_groups[t].empty()) h.new_task_seen[t] = 1;
  }
  for (int c = 0; c < mc.C; ++c) {
    class_decay[c] = bank.class_seen[c] ? bank.decay : 0.0;
    if (!class_groups[c].empty()) h.new_class_seen[c] = 1;
  }
  h.updated_vt = tape.moving_average_rows(h.embeddings, bank.V_T, task_groups,
                                          task_decay);
  h.updated_vc = tape.moving_average_rows(h.embeddings, bank.V_C, class_groups,
                                          class_decay);

  if (mc.L > 0) {
    // Neighborhood structure comes from the assembled adjacency over the
    // post-update node values; selection is discrete and carries no gradient.
    NodeBank updated(tape.value(h.updated_vt), tape.value(h.updated_vc), bank.decay);
    const EdgeParams ep =
        edge_params(params, cfg.alpha_t, cfg.alpha_c, cfg.alpha_p);
    const AssociationGraph g =
        assemble(updated, ep, tape.value(h.embeddings), batch.task_ids);
    const int kk = cfg.k <= 0 ? g.nodes() : std::min(cfg.k, g.nodes());
    const auto nbrs = topk_neighbors(g, kk);
    const Tape::Ref h0 = tape.concat_rows(
        tape.concat_rows(h.updated_vt, h.updated_vc), h.embeddings);
    const Tape::Ref hl = propagate_node(tape, h.refs, h0, nbrs);
    std::vector<int> inst_rows(batch.size());
    for (int b = 0; b < batch.size(); ++b) inst_rows[b] = mc.T + mc.C + b;
    h.instances = tape.gather_rows(hl, inst_rows);
  } else {
    h.instances = h.embeddings;
  }

  // Cross-entropy: mean within each task present, then mean across them.
  Tape::Ref ce_sum = -1;
  int tasks_present = 0;
  for (int t = 0; t < mc.T; ++t) {
    if (task_groups[t].empty()) continue;
    ++tasks_present;
    std::vector<int> labels_t;
    for (int i : task_groups[t]) labels_t.push_back(batch.labels[i]);
    const Tape::Ref feats = tape.gather_rows(h.instances, task_groups[t]);
    const Tape::Ref logits =
        tape.add_rowvec(tape.matmul(feats, h.refs.cls_W[t]), h.refs.cls_b[t]);
    const std::vector<double> w(labels_t.size(), 1.0 / double(labels_t.size()));
    const Tape::Ref ce_t = tape.softmax_xent(logits, labels_t, w);
    ce_sum = ce_sum < 0 ? ce_t : tape.add(ce_sum, ce_t);
  }
  h.ce = tape.scale_by(ce_sum, 1.0 / double(tasks_present));

  const Tape::Ref p = tape.gauss_softmax(
      h.updated_vc, h.updated_vt,
      resolve_alpha(cfg.alpha_p, mc.d));
  h.ae = tape.entropy_mean_rows(p);
  h.total = tape.add_scaled(h.ce, h.ae, 1.0, -cfg.beta);
  return h;
}

inline LossBreakdown read_breakdown(const Tape& tape, const ForwardHandles& h) {
  LossBreakdown b;
  b.ce = tape.value(h.ce).a[0];
  b.ae = tape.value(h.ae).a[0];
  b.total = tape.value(h.total).a[0];
  b.average_assignment_entropy = b.ae;
  return b;
}

inline LossBreakdown total_loss(const ParamStore& params, const NodeBank& bank,
                                const Batch& batch, const LossConfig& cfg) {
  Tape tape;
  const ForwardHandles h = build_training_forward(tape, params, bank, batch, cfg);
  return read_breakdown(tape, h);
}

// Exact gradient of total_loss over the flat parameter enumeration.
inline std::vector<double> gradient(const ParamStore& params, const NodeBank& bank,
                                    const Batch& batch, const LossConfig& cfg,
                                    LossBreakdown* breakdown = nullptr) {
  Tape tape;
  const ForwardHandles h = build_training_forward(tape, params, bank, batch, cfg);
  if (breakdown) *breakdown = read_breakdown(tape, h);
  tape.backward(h.total);
  std::vector<double> g = collect_flat_grad(tape, h.refs);
  for (size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i]))
      throw NumericError("non-finite gradient at parameter " +
                         params.name_of_flat(int(i)));
  return g;
}

}  // namespace mtcs
