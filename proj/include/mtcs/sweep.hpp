#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mtcs/config.hpp"
#include "mtcs/eval.hpp"

namespace mtcs {

// One full pipeline run: synthesize, shift, train, evaluate on the test
// split. The seed drives data, assignment and training together so a cell is
// reproducible from (config, seed) alone.
inline MetricsReport run_pipeline(const RunConfig& rc) {
  SynthConfig sc = synth_config(rc);
  auto [manifest, records] = generate_synthetic(sc);
  if (rc.missing_rate > 0.0) {
    const auto assignment =
        random_assignment(rc.T, rc.C, rc.missing_rate, rc.seed);
    auto shifted = apply_category_shift(manifest, records, assignment);
    manifest = std::move(shifted.first);
    records = std::move(shifted.second);
  }
  const TrainConfig tc = train_config(rc);
  const TrainResult r = rc.model == "erm" ? train_erm_baseline(manifest, records, tc)
                                          : train(manifest, records, tc);
  return evaluate(make_checkpoint(r, tc), manifest, records);
}

struct SweepStat {
  std::optional<double> mean, sd;
  int n = 0;
};

struct SweepRow {
  std::string value;
  SweepStat A_m, A_o, H, entropy;
};

struct SweepTable {
  std::string key;
  int seeds = 0;
  std::vector<SweepRow> rows;
};

namespace detail {

inline SweepStat summarize(const std::vector<std::optional<double>>& xs) {
  SweepStat s;
  std::vector<double> v;
  for (const auto& x : xs)
    if (x) v.push_back(*x);
  s.n = int(v.size());
  if (v.empty()) return s;
  double mean = 0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  s.mean = mean;
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  s.sd = v.size() > 1 ? std::sqrt(var / double(v.size() - 1)) : 0.0;
  return s;
}

inline std::string fmt_stat(const SweepStat& s, const char* fmt = "%.2f ± %.2f") {
  if (!s.mean) return "-";
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, *s.mean, *s.sd);
  return buf;
}

}  // namespace detail

// Cross product of varied values and seeds; each cell reports the sample mean
// and sample standard deviation over the seeds.
inline SweepTable run_sweep(const RunConfig& base, const std::string& key,
                            const std::vector<std::string>& values, int n_seeds) {
  if (values.empty()) throw ConfigError("sweep: no values to vary");
  if (n_seeds < 1) throw ConfigError("sweep: need at least one seed");
  SweepTable table;
  table.key = key;
  table.seeds = n_seeds;
  for (const auto& val : values) {
    std::vector<std::optional<double>> am, ao, h, ent;
    for (int s = 0; s < n_seeds; ++s) {
      RunConfig rc = base;
      set_config_key(rc, key, val);
      rc.seed = base.seed + uint64_t(s);
      const MetricsReport rep = run_pipeline(rc);
      am.push_back(rep.A_m);
      ao.push_back(rep.A_o);
      h.push_back(rep.H);
      ent.push_back(rep.avg_assignment_entropy);
    }
    SweepRow row;
    row.value = val;
    row.A_m = detail::summarize(am);
    row.A_o = detail::summarize(ao);
    row.H = detail::summarize(h);
    row.entropy = detail::summarize(ent);
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string format_sweep(const SweepTable& t) {
  std::string out =
      t.key + "\tA_m\tA_o\tH\tavg_entropy\t(n=" + std::to_string(t.seeds) + ")\n";
  for (const auto& r : t.rows)
    out += r.value + "\t" + detail::fmt_stat(r.A_m) + "\t" +
           detail::fmt_stat(r.A_o) + "\t" + detail::fmt_stat(r.H) + "\t" +
           detail::fmt_stat(r.entropy, "%.4f ± %.4f") + "\n";
  return out;
}

}  // namespace mtcs
