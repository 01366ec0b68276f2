// Command-line front end: synthetic data generation, category-shift splits,
// association-graph training, evaluation, gradient checking and ablation
// sweeps over seeds.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtcs/checkpoint.hpp"
#include "mtcs/config.hpp"
#include "mtcs/dataset.hpp"
#include "mtcs/eval.hpp"
#include "mtcs/gradcheck.hpp"
#include "mtcs/sweep.hpp"
#include "mtcs/training.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_path;
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool out_required) {
  cmd->add_option("--config", o.config_path, "run configuration file");
  auto* out = cmd->add_option("--out", o.out_path, "output path");
  if (out_required) out->required();
  cmd->add_option("--seed", o.seed, "override the config seed");
}

mtcs::RunConfig load_config(const CommonOpts& o) {
  mtcs::RunConfig rc;
  if (!o.config_path.empty()) rc = mtcs::load_run_config(o.config_path);
  if (o.seed) rc.seed = *o.seed;
  return rc;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw mtcs::DataError("cannot write: " + path);
  f << text;
  if (!f) throw mtcs::DataError("write failed: " + path);
}

long long count_split(const std::vector<mtcs::LabeledRecord>& rs, mtcs::Split s) {
  long long n = 0;
  for (const auto& r : rs) n += r.split == s;
  return n;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task classification under category shifts"};
  app.require_subcommand(1);

  CommonOpts gen_o;
  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  add_common(gen, gen_o, true);

  CommonOpts split_o;
  std::string split_in, assignment_path;
  double split_rate = -1.0;
  auto* split = app.add_subcommand("split", "apply a category shift");
  split->add_option("--in", split_in, "input dataset")->required();
  split->add_option("--missing-rate", split_rate, "target missing rate in [0, 1)");
  split->add_option("--assignment", assignment_path,
                    "explicit per-task observed-class file");
  add_common(split, split_o, true);

  CommonOpts train_o;
  std::string train_data, train_log;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--data", train_data, "training dataset")->required();
  train_cmd->add_option("--log", train_log, "training log path (default <out>.log)");
  add_common(train_cmd, train_o, true);

  CommonOpts eval_o;
  std::string eval_ckpt, eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "dataset with a test split")->required();
  add_common(eval_cmd, eval_o, false);

  CommonOpts grad_o;
  auto* grad = app.add_subcommand("gradcheck",
                                  "compare analytic and finite-difference gradients");
  add_common(grad, grad_o, false);

  CommonOpts sweep_o;
  std::string vary;
  int n_seeds = 5;
  auto* sweep_cmd = app.add_subcommand("sweep", "ablation sweep over seeds");
  sweep_cmd->add_option("--vary", vary, "key=v1,v2,... to vary")->required();
  sweep_cmd->add_option("--seeds", n_seeds, "number of seeds (default 5)");
  add_common(sweep_cmd, sweep_o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*gen) {
      const mtcs::RunConfig rc = load_config(gen_o);
      const auto [manifest, records] = mtcs::generate_synthetic(mtcs::synth_config(rc));
      mtcs::save_dataset(gen_o.out_path, manifest, records);
      std::printf("wrote %s: %lld train + %lld test records (T=%d C=%d D=%d)\n",
                  gen_o.out_path.c_str(),
                  count_split(records, mtcs::Split::train),
                  count_split(records, mtcs::Split::test), manifest.T, manifest.C,
                  manifest.d_in);
    } else if (*split) {
      const mtcs::RunConfig rc = load_config(split_o);
      auto [manifest, records] = mtcs::load_dataset(split_in);
      std::vector<std::vector<int>> assignment;
      if (!assignment_path.empty()) {
        assignment = mtcs::parse_assignment_file(assignment_path, manifest);
      } else {
        const double rate = split_rate >= 0.0 ? split_rate : rc.missing_rate;
        assignment =
            mtcs::random_assignment(manifest.T, manifest.C, rate, rc.seed);
      }
      auto [shifted, kept] = mtcs::apply_category_shift(manifest, records, assignment);
      mtcs::save_dataset(split_o.out_path, shifted, kept);
      std::printf("wrote %s: %zu records kept, gamma=%.6f\n", split_o.out_path.c_str(),
                  kept.size(), mtcs::missing_rate(shifted));
    } else if (*train_cmd) {
      const mtcs::RunConfig rc = load_config(train_o);
      const auto [manifest, records] = mtcs::load_dataset(train_data);
      const mtcs::TrainConfig tc = mtcs::train_config(rc);
      const mtcs::TrainResult result =
          rc.model == "erm" ? mtcs::train_erm_baseline(manifest, records, tc)
                            : mtcs::train(manifest, records, tc);
      mtcs::save_checkpoint(train_o.out_path, mtcs::make_checkpoint(result, tc));
      const std::string log_path =
          train_log.empty() ? train_o.out_path + ".log" : train_log;
      write_text(log_path, mtcs::format_train_log(result.log));
      if (result.log.empty())
        std::printf("wrote %s (no iterations)\n", train_o.out_path.c_str());
      else
        std::printf("wrote %s: final total=%.6f ce=%.6f ae=%.6f\n",
                    train_o.out_path.c_str(), result.log.back().total,
                    result.log.back().ce, result.log.back().ae);
    } else if (*eval_cmd) {
      const auto [manifest, records] = mtcs::load_dataset(eval_data);
      const mtcs::Checkpoint ckpt = mtcs::load_checkpoint(eval_ckpt);
      const mtcs::MetricsReport rep = mtcs::evaluate(ckpt, manifest, records);
      const std::string text = mtcs::format_report(rep);
      if (!eval_o.out_path.empty()) write_text(eval_o.out_path, text);
      std::printf("%s\n", mtcs::summary_line(rep).c_str());
    } else if (*grad) {
      mtcs::GradCheckSetup setup;
      if (!grad_o.config_path.empty()) {
        const mtcs::RunConfig rc = load_config(grad_o);
        setup.d = rc.d;
        setup.L = rc.L;
        setup.k = rc.k;
        setup.hidden_layers = rc.hidden_layers;
        setup.beta = rc.beta;
        setup.alpha_t = rc.alpha_t;
        setup.alpha_c = rc.alpha_c;
        setup.alpha_p = rc.alpha_p;
        setup.seed = rc.seed;
      }
      if (grad_o.seed) setup.seed = *grad_o.seed;
      const mtcs::GradCheckResult r = mtcs::run_gradcheck(setup);
      std::printf("gradcheck: max relative error %.3e over %d parameters (worst: %s)\n",
                  r.max_rel_err, r.n_params, r.worst_name.c_str());
      std::printf("%s\n", r.pass ? "PASS" : "FAIL");
      if (!r.pass) return 3;
    } else if (*sweep_cmd) {
      const mtcs::RunConfig rc = load_config(sweep_o);
      const auto eq = vary.find('=');
      if (eq == std::string::npos)
        throw mtcs::ConfigError("--vary expects key=v1,v2,...");
      const std::string key = vary.substr(0, eq);
      std::vector<std::string> values;
      std::stringstream ss(vary.substr(eq + 1));
      std::string tok;
      while (std::getline(ss, tok, ',')) values.push_back(tok);
      const mtcs::SweepTable table = mtcs::run_sweep(rc, key, values, n_seeds);
      const std::string text = mtcs::format_sweep(table);
      if (!sweep_o.out_path.empty()) write_text(sweep_o.out_path, text);
      std::printf("%s", text.c_str());
    }
  } catch (const mtcs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const mtcs::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const mtcs::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
