#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtcs/checkpoint.hpp"
#include "mtcs/message_passing.hpp"
#include "mtcs/objective.hpp"

namespace mtcs {

struct Prediction {
  int class_id = 0;
  std::vector<double> logits;
};

// Test-time pass for one instance: embed, connect it to the trained task and
// class graphs, propagate, classify with the task head. Independent of any
// other test instance by construction.
inline Prediction predict(const Checkpoint& ckpt, const std::vector<double>& x,
                          int task) {
  const ParamStore& p = ckpt.params;
  if (ckpt.kind == ModelKind::erm) {
    Prediction out;
    out.logits = classify(p, 0, embed(p, x));
    out.class_id = argmax(out.logits);
    return out;
  }
  if (task < 0 || task >= p.cfg.T) throw DataError("predict: task id out of range");
  const Tensor e = embed_batch(p, Tensor::from_row(x));
  Prediction out;
  if (p.cfg.L > 0) {
    const EdgeParams ep = edge_params(p, ckpt.alpha_t, ckpt.alpha_c, ckpt.alpha_p);
    const AssociationGraph g = assemble(ckpt.bank, ep, e, {task});
    const PropagateResult prop = propagate(gnn_layers(p), g, ckpt.k);
    out.logits = classify(p, task, prop.instances.row_vec(0));
  } else {
    out.logits = classify(p, task, e.row_vec(0));
  }
  out.class_id = argmax(out.logits);
  return out;
}

struct TaskMetrics {
  long long missing_total = 0, missing_correct = 0;
  long long observed_total = 0, observed_correct = 0;
  std::optional<double> A_m, A_o, H;  // percent
};

struct MetricsReport {
  double gamma = 0.0;
  std::optional<double> A_m, A_o, H;             // percent, averaged over tasks
  std::optional<double> avg_assignment_entropy;  // from the trained bank
  std::vector<TaskMetrics> per_task;
  // per (task, class): {correct, total} over the test split
  std::vector<std::vector<std::pair<long long, long long>>> per_task_class;
};

inline double harmonic_mean(double am, double ao) {
  return am + ao == 0.0 ? 0.0 : 2.0 * am * ao / (am + ao);
}

// Section-5 protocol: a test record counts toward the missing bucket of its
// task when its class is unobserved there, else toward the observed bucket.
// Per-task accuracies are averaged across tasks and H is the harmonic mean of
// those averages. Empty buckets are not applicable and leave the average.
inline MetricsReport evaluate(const Checkpoint& ckpt, const DatasetManifest& m,
                              const std::vector<LabeledRecord>& records) {
  validate_manifest(m);
  if (ckpt.params.cfg.C != m.C)
    throw DataError("evaluate: checkpoint and manifest disagree on C");
  if (ckpt.kind == ModelKind::graph && ckpt.params.cfg.T != m.T)
    throw DataError("evaluate: checkpoint and manifest disagree on T");

  MetricsReport rep;
  rep.gamma = missing_rate(m);
  rep.per_task.assign(m.T, {});
  rep.per_task_class.assign(
      m.T, std::vector<std::pair<long long, long long>>(m.C, {0, 0}));

  for (const auto& r : records) {
    if (r.split != Split::test) continue;
    const Prediction pred = predict(ckpt, r.features, r.task_id);
    const bool correct = pred.class_id == r.class_id;
    TaskMetrics& tm = rep.per_task[r.task_id];
    if (m.observes(r.task_id, r.class_id)) {
      ++tm.observed_total;
      tm.observed_correct += correct;
    } else {
      ++tm.missing_total;
      tm.missing_correct += correct;
    }
    auto& cell = rep.per_task_class[r.task_id][r.class_id];
    cell.first += correct;
    ++cell.second;
  }

  double am_sum = 0, ao_sum = 0;
  int am_n = 0, ao_n = 0;
  for (auto& tm : rep.per_task) {
    if (tm.missing_total > 0) {
      tm.A_m = 100.0 * double(tm.missing_correct) / double(tm.missing_total);
      am_sum += *tm.A_m;
      ++am_n;
    }
    if (tm.observed_total > 0) {
      tm.A_o = 100.0 * double(tm.observed_correct) / double(tm.observed_total);
      ao_sum += *tm.A_o;
      ++ao_n;
    }
    if (tm.A_m && tm.A_o) tm.H = harmonic_mean(*tm.A_m, *tm.A_o);
  }
  if (am_n > 0) rep.A_m = am_sum / am_n;
  if (ao_n > 0) rep.A_o = ao_sum / ao_n;
  if (rep.A_m && rep.A_o) rep.H = harmonic_mean(*rep.A_m, *rep.A_o);

  if (ckpt.kind == ModelKind::graph) {
    const double alpha_p = resolve_alpha(ckpt.alpha_p, ckpt.params.cfg.d);
    const Tensor p = class_task_edges(ckpt.bank, alpha_p);
    double h = 0.0;
    for (int c = 0; c < p.rows; ++c) h += assignment_entropy(p.row_vec(c));
    rep.avg_assignment_entropy = h / double(p.rows);
  }
  return rep;
}

namespace detail {

inline std::string fmt_opt(const std::optional<double>& v, const char* fmt = "%.4f") {
  if (!v) return "-";
  char buf[48];
  std::snprintf(buf, sizeof(buf), fmt, *v);
  return buf;
}

}  // namespace detail

inline std::string summary_line(const MetricsReport& r) {
  std::string s = "summary";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", r.gamma);
  s += std::string("\t") + buf;
  s += "\t" + detail::fmt_opt(r.A_m);
  s += "\t" + detail::fmt_opt(r.A_o);
  s += "\t" + detail::fmt_opt(r.H);
  s += "\t" + detail::fmt_opt(r.avg_assignment_entropy, "%.6f");
  return s;
}

inline std::string format_report(const MetricsReport& r) {
  std::string out = "MTCS-REPORT v1\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "gamma=%.6f\n", r.gamma);
  out += buf;
  out += "A_m=" + detail::fmt_opt(r.A_m) + "\n";
  out += "A_o=" + detail::fmt_opt(r.A_o) + "\n";
  out += "H=" + detail::fmt_opt(r.H) + "\n";
  out += "avg_assignment_entropy=" +
         detail::fmt_opt(r.avg_assignment_entropy, "%.6f") + "\n";
  out += "per_task:\ntask\tA_m\tA_o\tH\tn_missing\tn_observed\n";
  for (size_t t = 0; t < r.per_task.size(); ++t) {
    const TaskMetrics& tm = r.per_task[t];
    out += std::to_string(t) + "\t" + detail::fmt_opt(tm.A_m) + "\t" +
           detail::fmt_opt(tm.A_o) + "\t" + detail::fmt_opt(tm.H) + "\t" +
           std::to_string(tm.missing_total) + "\t" +
           std::to_string(tm.observed_total) + "\n";
  }
  out += "per_task_class:\ntask\tclass\tcorrect\ttotal\n";
  for (size_t t = 0; t < r.per_task_class.size(); ++t)
    for (size_t c = 0; c < r.per_task_class[t].size(); ++c) {
      const auto& cell = r.per_task_class[t][c];
      if (cell.second == 0) continue;
      out += std::to_string(t) + "\t" + std::to_string(c) + "\t" +
             std::to_string(cell.first) + "\t" + std::to_string(cell.second) + "\n";
    }
  out += summary_line(r) + "\n";
  return out;
}

}  // namespace mtcs
