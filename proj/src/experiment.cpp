#include "fedcvar/experiment.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "fedcvar/atomic_file.hpp"
#include "fedcvar/idx.hpp"
#include "fedcvar/ram.hpp"
#include "fedcvar/snapshot.hpp"
#include "fedcvar/svg.hpp"

namespace fedcvar::exp {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve_data_dir(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.dataset.dir);
  return dir.is_absolute() ? dir : data_root(cfg) / dir;
}

fs::path require_file(const fs::path& dir, const std::string& name) {
  fs::path p = dir / name;
  if (!fs::exists(p)) {
    throw Error("missing dataset file " + p.string() + " (set " + kDataDirEnv +
                " or dataset.dir to the directory holding the IDX files)");
  }
  return p;
}

void repartition(LoadedData& data, const ExperimentConfig& cfg) {
  data.partition = partition_indices(data.train, cfg.partition);
  data.shards.clear();
  for (const auto& idx : data.partition.user_indices) data.shards.push_back(subset(data.train, idx));
}

std::string num(double v) { return fmt::format("{}", v); }

double parse_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc{} || ptr != end)
    throw ParseError("bad number '" + std::string(field) + "' on line " + std::to_string(line), 0);
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

json summary_json(const RunSummary& s) {
  json per = json::array();
  for (const auto& v : s.per_class) per.push_back(v ? json(*v) : json(nullptr));
  return {{"overall_acc", s.overall},
          {"per_class_acc", per},
          {"rare_class_acc", s.rare_mean ? json(*s.rare_mean) : json(nullptr)}};
}

void write_charts(const ExperimentConfig& cfg, const LoadedData& data, const RunOutcome& out,
                  const std::vector<double>& ram_weights, const fs::path& dir) {
  const std::size_t w = cfg.eval.smoothing_window;
  std::vector<double> rounds, overall, t, rare;
  for (const auto& p : out.points) {
    rounds.push_back(static_cast<double>(p.round));
    overall.push_back(p.overall_acc);
    t.push_back(p.global_t);
    double sum = 0.0;
    std::size_t n = 0;
    for (int c : out.rare_classes) {
      if (p.per_class_acc[static_cast<std::size_t>(c)]) {
        sum += *p.per_class_acc[static_cast<std::size_t>(c)];
        ++n;
      }
    }
    rare.push_back(n ? sum / static_cast<double>(n) : std::nan(""));
  }

  if (!out.points.empty()) {
    svg::LineChart acc{cfg.name + ": test accuracy", "round", "accuracy", {}, true};
    svg::add_raw_and_smoothed(acc, "overall", rounds, overall, svg::palette(0), w);
    svg::add_raw_and_smoothed(acc, "rare classes", rounds, rare, svg::palette(1), w);
    write_file_atomic(dir / "accuracy.svg", svg::render_line_chart(acc));

    svg::LineChart per{cfg.name + ": per-class test accuracy", "round", "accuracy", {}, true};
    for (std::size_t c = 0; c < data.test.num_classes; ++c) {
      std::vector<double> y;
      for (const auto& p : out.points) y.push_back(p.per_class_acc[c] ? *p.per_class_acc[c] : std::nan(""));
      per.series.push_back({fmt::format("class {}", c), rounds, y,
                            svg::palette(c), 1.0, 1.5});
    }
    write_file_atomic(dir / "per_class_accuracy.svg", svg::render_line_chart(per));

    svg::LineChart tc{cfg.name + ": global CVaR threshold", "round", "t", {}, false};
    svg::add_raw_and_smoothed(tc, "t_global", rounds, t, svg::palette(2), w);
    write_file_atomic(dir / "global_t.svg", svg::render_line_chart(tc));
  }

  std::vector<std::string> labels;
  for (std::size_t i = 0; i < ram_weights.size(); ++i) labels.push_back(std::to_string(i));
  write_file_atomic(dir / "ram.svg",
                    svg::render_bar_chart(cfg.name + ": RAM selection probabilities", labels, ram_weights));

  if (data.test.dim() == 2) {
    write_file_atomic(dir / "boundary.svg",
                      svg::render_decision_regions(cfg.name + ": decision regions (test set)",
                                                   out.theta, data.test));
  }
}

}  // namespace

LoadedData load_data(const ExperimentConfig& cfg) {
  LoadedData data;
  const auto& d = cfg.dataset;
  if (d.kind == DatasetKind::Synthetic2D) {
    SyntheticSpec spec{d.num_classes, d.per_class, d.spread, d.seed, d.radius, d.center};
    data.train = gen_synthetic_2d(spec);
    spec.per_class = d.test_per_class;
    spec.seed = d.test_seed;
    data.test = gen_synthetic_2d(spec);
  } else {
    const fs::path dir = resolve_data_dir(cfg);
    data.train = load_idx_dataset(require_file(dir, d.train_images), require_file(dir, d.train_labels),
                                  d.num_classes, d.train_limit);
    data.test = load_idx_dataset(require_file(dir, d.test_images), require_file(dir, d.test_labels),
                                 d.num_classes, d.test_limit);
  }
  repartition(data, cfg);
  return data;
}

std::string metrics_header(std::size_t num_classes) {
  std::string h = "round,overall_acc";
  for (std::size_t c = 0; c < num_classes; ++c) h += fmt::format(",per_class_acc_{}", c);
  h += ",global_t,selected_user_freq_snapshot";
  return h;
}

void write_metrics_csv(std::ostream& out, const std::vector<EvalPoint>& points,
                       std::size_t num_classes) {
  out << metrics_header(num_classes) << '\n';
  for (const auto& p : points) {
    out << p.round << ',' << num(p.overall_acc);
    for (std::size_t c = 0; c < num_classes; ++c) {
      out << ',';
      if (c < p.per_class_acc.size() && p.per_class_acc[c]) out << num(*p.per_class_acc[c]);
    }
    out << ',' << num(p.global_t) << ',';
    for (std::size_t u = 0; u < p.selection_freq.size(); ++u) {
      if (u) out << ';';
      out << num(p.selection_freq[u]);
    }
    out << '\n';
  }
}

std::vector<EvalPoint> parse_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty metrics file", 0);
  const auto cols = split(line, ',');
  if (cols.size() < 4) throw ParseError("metrics header too short", 0);
  const std::size_t C = cols.size() - 4;
  if (line != metrics_header(C)) throw ParseError("unexpected metrics header: " + line, 0);

  std::vector<EvalPoint> points;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != C + 4)
      throw ParseError("wrong field count on line " + std::to_string(lineno), 0);
    EvalPoint p;
    p.round = static_cast<std::size_t>(parse_double(f[0], lineno));
    p.overall_acc = parse_double(f[1], lineno);
    for (std::size_t c = 0; c < C; ++c) {
      if (f[2 + c].empty()) {
        p.per_class_acc.emplace_back();
      } else {
        p.per_class_acc.emplace_back(parse_double(f[2 + c], lineno));
      }
    }
    p.global_t = parse_double(f[2 + C], lineno);
    if (!f[3 + C].empty()) {
      for (auto s : split(f[3 + C], ';')) p.selection_freq.push_back(parse_double(s, lineno));
    }
    points.push_back(std::move(p));
  }
  return points;
}

RunSummary summarize(const std::vector<EvalPoint>& points, std::size_t trailing,
                     const std::vector<int>& rare_classes) {
  RunSummary s;
  if (points.empty()) return s;
  const std::size_t n = std::min(std::max<std::size_t>(trailing, 1), points.size());
  const std::size_t C = points.back().per_class_acc.size();
  std::vector<double> sum(C, 0.0);
  std::vector<std::size_t> cnt(C, 0);
  for (std::size_t i = points.size() - n; i < points.size(); ++i) {
    s.overall += points[i].overall_acc;
    for (std::size_t c = 0; c < C && c < points[i].per_class_acc.size(); ++c) {
      if (points[i].per_class_acc[c]) {
        sum[c] += *points[i].per_class_acc[c];
        ++cnt[c];
      }
    }
  }
  s.overall /= static_cast<double>(n);
  for (std::size_t c = 0; c < C; ++c) {
    s.per_class.push_back(cnt[c] ? std::optional(sum[c] / static_cast<double>(cnt[c])) : std::nullopt);
  }
  double rsum = 0.0;
  std::size_t rcnt = 0;
  for (int c : rare_classes) {
    const auto idx = static_cast<std::size_t>(c);
    if (idx < C && s.per_class[idx]) {
      rsum += *s.per_class[idx];
      ++rcnt;
    }
  }
  if (rcnt) s.rare_mean = rsum / static_cast<double>(rcnt);
  return s;
}

fs::path output_dir(const ExperimentConfig& cfg) {
  return cfg.output_dir.empty() ? fs::path("runs") / cfg.name : fs::path(cfg.output_dir);
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  const LoadedData data = load_data(cfg);
  return run_experiment(cfg, data, opts);
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const LoadedData& data,
                          const RunOptions& opts) {
  fed::TrainConfig tc = cfg.train;
  tc.arch = resolve_arch(cfg);
  const auto raw_weights = resolve_ram_weights(cfg);
  const auto ram_dist = ram::make_ram(raw_weights);
  const std::size_t K = data.shards.size();

  RunOutcome out;
  out.rare_classes = data.partition.rare_classes;
  out.out_dir = opts.out_dir.empty() ? output_dir(cfg) : opts.out_dir;

  std::vector<std::size_t> picks(K, 0);
  auto observer = [&](const fed::GlobalState& st) {
    ++picks[st.log.back().selected_user];
    if (st.round % cfg.eval.every != 0 && st.round != tc.global_rounds) return;
    const auto m = fed::evaluate(st.theta_global, data.test);
    EvalPoint p{st.round, m.overall_acc, m.per_class_acc, st.t_global, {}};
    for (auto c : picks) p.selection_freq.push_back(static_cast<double>(c) / static_cast<double>(st.round));
    if (opts.on_eval) opts.on_eval(p);
    out.points.push_back(std::move(p));
  };

  auto result = fed::train(data.shards, ram_dist, tc, observer);
  out.failure = result.failure;
  out.rounds_completed = result.state.round;
  out.theta = result.state.theta_global;
  out.t_global = result.state.t_global;
  out.summary = summarize(out.points, cfg.eval.summary_points, out.rare_classes);

  if (!opts.write_artifacts) return out;

  const fs::path dir = out.out_dir;
  fs::create_directories(dir);
  {
    std::ostringstream csv;
    write_metrics_csv(csv, out.points, data.test.num_classes);
    write_file_atomic(dir / "metrics.csv", csv.str());
  }
  write_snapshot(dir / "params.bin", out.theta);

  const auto& weights = ram::RamAuditor::weights(ram_dist);
  json meta;
  meta["config"] = to_json(cfg);
  meta["defaults_filled"] = cfg.defaulted;
  meta["status"] = out.ok() ? "ok" : "diverged";
  if (out.failure) {
    meta["failure"] = {{"message", out.failure->what()},
                       {"round", out.failure->round()},
                       {"user", out.failure->user()},
                       {"epoch", out.failure->epoch()}};
  }
  meta["rounds_completed"] = out.rounds_completed;
  meta["model"] = {{"arch", tc.arch.describe()}, {"param_count", tc.arch.param_count()}};
  meta["ram_weights"] = weights;
  std::vector<std::size_t> sizes;
  for (const auto& s : data.shards) sizes.push_back(s.size());
  meta["partition"] = {{"frequent_users", data.partition.frequent_users},
                       {"frequent_classes", data.partition.frequent_classes},
                       {"rare_classes", data.partition.rare_classes},
                       {"shard_sizes", sizes}};
  meta["data"] = {{"train_samples", data.train.size()}, {"test_samples", data.test.size()}};
  meta["selection_counts"] = picks;
  meta["final"] = {{"t_global", out.t_global}, {"summary", summary_json(out.summary)}};
  write_file_atomic(dir / "run.json", meta.dump(2) + "\n");

  if (cfg.eval.charts) write_charts(cfg, data, out, weights, dir);
  return out;
}

std::uint64_t sweep_seed(std::uint64_t base, double alpha, double gamma, std::size_t repeat) {
  return derive_seed({base, std::bit_cast<std::uint64_t>(alpha), std::bit_cast<std::uint64_t>(gamma),
                      static_cast<std::uint64_t>(repeat)});
}

SweepResult sweep(const ExperimentConfig& base, const std::vector<double>& alphas,
                  const std::vector<double>& gammas, std::size_t repeats, std::uint64_t base_seed,
                  const fs::path& out_dir, bool write_cell_artifacts) {
  if (alphas.empty() || gammas.empty()) throw InvalidArgument("sweep grid is empty");
  if (repeats == 0) throw InvalidArgument("repeats must be at least 1");

  // IDX files are read once; only the partition changes between runs.
  std::optional<LoadedData> files;
  if (base.dataset.kind != DatasetKind::Synthetic2D) files = load_data(base);

  SweepResult result;
  for (double a : alphas) {
    for (double g : gammas) {
      SweepCell cell;
      cell.alpha = a;
      cell.gamma = g;
      std::vector<double> overall;
      std::vector<std::vector<double>> rare;
      for (std::size_t r = 0; r < repeats; ++r) {
        ++cell.runs;
        try {
          ExperimentConfig cfg = base;
          cfg.train.risk.alpha = a;
          cfg.train.risk.gamma = g;
          cfg.train.risk.validate();
          apply_seed(cfg, sweep_seed(base_seed, a, g, r));
          LoadedData data;
          if (files) {
            data = *files;
            repartition(data, cfg);
          } else {
            data = load_data(cfg);
          }
          if (result.rare_classes.empty()) result.rare_classes = data.partition.rare_classes;
          RunOptions opts;
          opts.out_dir = out_dir / fmt::format("a{}_g{}", a, g) / fmt::format("r{}", r);
          opts.write_artifacts = write_cell_artifacts;
          auto run = run_experiment(cfg, data, opts);
          if (!run.ok()) {
            ++cell.failures;
            cell.errors.push_back(run.failure->what());
            continue;
          }
          overall.push_back(run.summary.overall);
          rare.resize(run.rare_classes.size());
          for (std::size_t k = 0; k < run.rare_classes.size(); ++k) {
            const auto& v = run.summary.per_class[static_cast<std::size_t>(run.rare_classes[k])];
            rare[k].push_back(v ? *v : std::nan(""));
          }
        } catch (const Error& e) {
          ++cell.failures;
          cell.errors.push_back(e.what());
        }
      }
      auto stat = [](const std::vector<double>& v) {
        SweepStat s;
        if (v.empty()) return SweepStat{std::nan(""), std::nan("")};
        for (double x : v) s.mean += x;
        s.mean /= static_cast<double>(v.size());
        if (v.size() > 1) {
          double ss = 0.0;
          for (double x : v) ss += (x - s.mean) * (x - s.mean);
          s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
        }
        return s;
      };
      cell.overall = stat(overall);
      for (const auto& v : rare) cell.rare.push_back(stat(v));
      result.cells.push_back(std::move(cell));
    }
  }
  for (auto& cell : result.cells) cell.rare.resize(result.rare_classes.size(), SweepStat{std::nan(""), std::nan("")});
  return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "alpha,gamma,runs,failures,overall_mean,overall_std";
  for (int c : result.rare_classes) out << ",class_" << c << "_mean,class_" << c << "_std";
  out << '\n';
  auto field = [](double v) { return std::isfinite(v) ? num(v) : std::string(); };
  for (const auto& cell : result.cells) {
    out << num(cell.alpha) << ',' << num(cell.gamma) << ',' << cell.runs << ',' << cell.failures << ','
        << field(cell.overall.mean) << ',' << field(cell.overall.std);
    for (const auto& s : cell.rare) out << ',' << field(s.mean) << ',' << field(s.std);
    out << '\n';
  }
}

}  // namespace fedcvar::exp
