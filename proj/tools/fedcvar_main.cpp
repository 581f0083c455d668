// fedcvar: command-line front end for the federated CVaR simulator.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "fedcvar/atomic_file.hpp"
#include "fedcvar/checks.hpp"
#include "fedcvar/config.hpp"
#include "fedcvar/data.hpp"
#include "fedcvar/error.hpp"
#include "fedcvar/experiment.hpp"
#include "fedcvar/snapshot.hpp"

namespace {

using namespace fedcvar;

std::string acc_list(const std::vector<std::optional<double>>& v) {
  std::string s;
  for (std::size_t c = 0; c < v.size(); ++c) {
    if (c) s += ' ';
    s += v[c] ? fmt::format("{:.3f}", *v[c]) : std::string("-");
  }
  return s;
}

int cmd_train(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out,
              std::optional<std::size_t> workers, bool quiet) {
  auto cfg = exp::load_config(path);
  if (seed) exp::apply_seed(cfg, *seed);
  if (workers) cfg.train.workers = *workers;
  exp::RunOptions opts;
  opts.out_dir = out;
  if (!quiet) {
    opts.on_eval = [](const exp::EvalPoint& p) {
      fmt::print("round {:>6}  acc {:.4f}  t {:+.4f}  per-class [{}]\n", p.round, p.overall_acc,
                 p.global_t, acc_list(p.per_class_acc));
      std::fflush(stdout);
    };
  }
  const auto run = exp::run_experiment(cfg, opts);
  fmt::print("artifacts: {}\n", run.out_dir.string());
  fmt::print("summary: overall {:.4f}", run.summary.overall);
  if (run.summary.rare_mean) fmt::print("  rare classes {:.4f}", *run.summary.rare_mean);
  fmt::print("\n");
  if (!run.ok()) {
    fmt::print(stderr, "error: {}\n", run.failure->what());
    return 3;
  }
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& params_path,
             std::optional<std::uint64_t> seed) {
  auto cfg = exp::load_config(config_path);
  if (seed) exp::apply_seed(cfg, *seed);
  const ModelParams theta = read_snapshot(params_path);
  if (!(theta.arch == exp::resolve_arch(cfg))) {
    throw Error("snapshot architecture " + theta.arch.describe() +
                " does not match the config's " + exp::resolve_arch(cfg).describe());
  }
  const auto data = exp::load_data(cfg);
  const auto m = fed::evaluate(theta, data.test);
  nlohmann::json j;
  j["test_samples"] = data.test.size();
  j["overall_acc"] = m.overall_acc;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& v : m.per_class_acc) per.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  j["per_class_acc"] = per;
  j["rare_classes"] = data.partition.rare_classes;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_sweep(const std::string& path, const std::vector<double>& alphas,
              const std::vector<double>& gammas, std::size_t repeats,
              std::optional<std::uint64_t> seed, std::string out, bool no_cells) {
  const auto cfg = exp::load_config(path);
  const std::uint64_t base = seed.value_or(cfg.train.seeds.init);
  if (out.empty()) out = (exp::output_dir(cfg) / "sweep").string();
  const auto result = exp::sweep(cfg, alphas, gammas, repeats, base, out, !no_cells);
  std::ostringstream csv;
  exp::write_sweep_csv(csv, result);
  write_file_atomic(std::filesystem::path(out) / "summary.csv", csv.str());
  std::cout << csv.str();
  std::size_t failures = 0;
  for (const auto& cell : result.cells) {
    failures += cell.failures;
    for (const auto& e : cell.errors)
      fmt::print(stderr, "alpha={} gamma={}: {}\n", cell.alpha, cell.gamma, e);
  }
  return failures ? 3 : 0;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out, std::string test_out) {
  std::ifstream in(spec_path);
  if (!in) throw Error("cannot open " + spec_path);
  nlohmann::json doc = nlohmann::json::parse(in);
  // A full experiment config is accepted too; its dataset section is used.
  if (doc.contains("dataset")) {
    auto cfg = exp::parse_config(doc);
    doc = exp::to_json(cfg)["dataset"];
    doc.erase("kind");
  }
  nlohmann::json wrapped{{"dataset", doc}, {"partition", {{"num_users", 2}, {"frequent_percent", 50}, {"frequent_pattern_percent", 50}}},
                         {"ram", {{"kind", "explicit"}, {"weights", {0.5, 0.5}}}}};
  wrapped["dataset"]["kind"] = "synthetic2d";
  const auto cfg = exp::parse_config(wrapped);
  const auto data = exp::load_data(cfg);
  auto emit = [](const Dataset& d, const std::string& where) {
    std::ostringstream ss;
    write_synthetic_csv(d, ss);
    if (where.empty() || where == "-") {
      std::cout << ss.str();
    } else {
      write_file_atomic(where, ss.str());
    }
  };
  emit(data.train, out);
  if (!test_out.empty()) emit(data.test, test_out);
  return 0;
}

int cmd_check_grad(std::size_t trials, std::uint64_t seed) {
  const auto r = checks::check_composite_gradients(trials, seed);
  fmt::print("check-grad: {} trials, max relative error {:.3e} (tolerance {:.0e}): {}\n", r.trials,
             r.max_rel_err, r.tolerance, r.passed() ? "PASS" : "FAIL");
  return r.passed() ? 0 : 1;
}

int cmd_check_cvar(std::size_t trials, std::uint64_t seed) {
  const auto r = checks::check_cvar(trials, seed);
  fmt::print("check-cvar: {} trials\n", r.trials);
  fmt::print("  closed form vs grid oracle: max |diff| {:.3e} (tolerance {:.0e})\n", r.max_grid_err,
             r.grid_tolerance);
  fmt::print("  alpha = 1 vs mean:          max |diff| {:.3e} (tolerance {:.0e})\n", r.max_mean_err,
             r.exact_tolerance);
  fmt::print("  alpha <= min prob vs max:   max |diff| {:.3e} (tolerance {:.0e})\n", r.max_limit_err,
             r.exact_tolerance);
  fmt::print("check-cvar: {}\n", r.passed() ? "PASS" : "FAIL");
  return r.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning under a random access channel: FedAvg and CVaR-aware training"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string config, params, out, test_out;
  std::optional<std::size_t> workers;
  bool quiet = false, no_cells = false;
  std::vector<double> alphas{1.0}, gammas{1.0};
  std::size_t repeats = 1, trials = 100;

  auto* train = app.add_subcommand("train", "Run one experiment and write its artifacts");
  train->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Derive every seed from this value");
  train->add_option("--out", out, "Artifact directory (default: output.dir or runs/<name>)");
  train->add_option("--workers", workers, "Threads for the per-round local updates");
  train->add_flag("--quiet,-q", quiet, "Only print the summary");

  auto* eval = app.add_subcommand("eval", "Evaluate a parameter snapshot on the config's test set");
  eval->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("params", params, "Snapshot written by train (params.bin)")->required()->check(CLI::ExistingFile);
  eval->add_option("--seed", seed, "Derive every seed from this value");

  auto* sw = app.add_subcommand("sweep", "Grid over alpha x gamma with repeats");
  sw->add_option("config", config, "Base experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sw->add_option("--alpha", alphas, "CVaR levels")->expected(1, -1);
  sw->add_option("--gamma", gammas, "Mean weights")->expected(1, -1);
  sw->add_option("--repeats", repeats, "Runs per cell")->check(CLI::PositiveNumber);
  sw->add_option("--seed", seed, "Base seed for the cell seeds (default: seeds.init)");
  sw->add_option("--out", out, "Sweep directory (default: <output dir>/sweep)");
  sw->add_flag("--no-cell-artifacts", no_cells, "Only write summary.csv");

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic 2-D blob dataset as CSV");
  gen->add_option("spec", config, "JSON dataset spec or experiment config")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Training CSV (default: stdout)");
  gen->add_option("--test-out", test_out, "Also write the test split here");

  std::uint64_t check_seed = 0;
  auto* cg = app.add_subcommand("check-grad", "Verify composite-loss gradients by central differences");
  cg->add_option("--trials", trials, "Random instances")->check(CLI::PositiveNumber);
  cg->add_option("--seed", check_seed, "Instance seed");

  auto* cc = app.add_subcommand("check-cvar", "Verify the closed-form CVaR against a grid oracle");
  cc->add_option("--trials", trials, "Random instances")->check(CLI::PositiveNumber);
  cc->add_option("--seed", check_seed, "Instance seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, seed, out, workers, quiet);
    if (*eval) return cmd_eval(config, params, seed);
    if (*sw) return cmd_sweep(config, alphas, gammas, repeats, seed, out, no_cells);
    if (*gen) return cmd_gen_data(config, out, test_out);
    if (*cg) return cmd_check_grad(trials, check_seed);
    if (*cc) return cmd_check_cvar(trials, check_seed);
  } catch (const fedcvar::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}
