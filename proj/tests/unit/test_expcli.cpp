#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fedcvar/atomic_file.hpp"
#include "fedcvar/checks.hpp"
#include "fedcvar/config.hpp"
#include "fedcvar/error.hpp"
#include "fedcvar/experiment.hpp"
#include "fedcvar/snapshot.hpp"
#include "fedcvar/svg.hpp"
#include "test_support.hpp"

using namespace fedcvar;
using namespace fedcvar::exp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A small synthetic experiment that runs in well under a second.
json tiny_doc() {
  return json::parse(R"({
    "name": "tiny",
    "dataset": {"kind": "synthetic2d", "num_classes": 3, "per_class": 30, "test_per_class": 30,
                "center": [4.5, 4.5]},
    "partition": {"num_users": 3, "frequent_percent": 67, "frequent_pattern_percent": 67},
    "ram": {"kind": "explicit", "weights": [0.5, 0.4, 0.1]},
    "train": {"rounds": 30, "local_epochs": 2, "batch_size": 16, "lr_theta": 0.05, "lr_t": 0.01},
    "risk": {"alpha": 0.2, "gamma": 0.1},
    "eval": {"every": 10, "charts": true}
  })");
}

}  // namespace

TEST_CASE("bundled configs parse with their documented values") {
  const auto dir = test_support::source_dir() / "configs";
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    CAPTURE(e.path().string());
    CHECK_NOTHROW(load_config(e.path()));
  }

  const auto a = load_config(dir / "fig2a.json");
  CHECK(a.partition.num_users == 3);
  CHECK(resolve_ram_weights(a) == std::vector<double>{0.5, 0.4, 0.1});
  CHECK(a.train.risk.alpha == 0.1);
  CHECK(a.train.risk.gamma == 0.1);
  CHECK(a.model == ModelKind::LogReg);
  CHECK(resolve_arch(a).param_count() == 9);

  const auto m = load_config(dir / "mnist_fig3.json");
  CHECK(m.dataset.kind == DatasetKind::Mnist);
  CHECK(m.partition.num_users == 30);
  CHECK(m.partition.frequent_fraction == 90);
  CHECK(m.partition.frequent_pattern_fraction == 90);
  CHECK(m.train.risk.alpha == 0.3);
  CHECK(m.train.risk.gamma == 0.3);
  CHECK(m.train.global_rounds == 4000);
  CHECK(m.train.lr_theta == 1e-3);
  CHECK(m.train.lr_t == 1e-4);
  CHECK(m.train.local_epochs == 10);
  CHECK(m.hidden == std::vector<std::size_t>{128, 128});
  const auto w = resolve_ram_weights(m);
  REQUIRE(w.size() == 30);
  CHECK(w[29] == 0.0053);

  CHECK(load_config(dir / "mnist_fig4.json").partition.frequent_pattern_fraction == 80);
}

TEST_CASE("config errors name the offending key") {
  auto doc = tiny_doc();
  doc["train"]["lr_thetaa"] = 0.1;
  try {
    parse_config(doc);
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "train.lr_thetaa");
  }

  doc = tiny_doc();
  doc["risk"]["alpha"] = 0.0;
  try {
    parse_config(doc);
    FAIL("alpha = 0 accepted");
  } catch (const ConfigError& e) {
    CHECK(e.key().find("alpha") != std::string::npos);
  }

  doc = tiny_doc();
  doc["train"]["rounds"] = "many";
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = tiny_doc();
  doc["ram"]["weights"] = {0.5, 0.5};
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = tiny_doc();
  doc["surprise"] = json::object();
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  CHECK_THROWS_AS(parse_config_text("{\"name\": "), ParseError);
}

TEST_CASE("defaults are filled and echoed") {
  const auto cfg = parse_config(tiny_doc());
  CHECK(cfg.train.t_init == 0.0);
  CHECK(cfg.train.seeds.init == 1);
  CHECK(cfg.eval.smoothing_window == 50);
  auto has = [&](const std::string& k) {
    return std::find(cfg.defaulted.begin(), cfg.defaulted.end(), k) != cfg.defaulted.end();
  };
  CHECK(has("train.t_init"));
  CHECK(has("seeds.init"));
  CHECK_FALSE(has("train.rounds"));

  // The resolved echo parses back to the same configuration.
  const auto echo = to_json(cfg);
  CHECK(echo["train"]["t_init"] == 0.0);
  const auto again = parse_config(echo);
  CHECK(to_json(again) == echo);
  CHECK(again.defaulted.empty());
}

TEST_CASE("apply_seed replaces every stream") {
  auto a = parse_config(tiny_doc());
  auto b = a;
  apply_seed(a, 5);
  apply_seed(b, 6);
  CHECK(a.train.seeds.init != b.train.seeds.init);
  CHECK(a.train.seeds.ram != b.train.seeds.ram);
  CHECK(a.partition.seed != b.partition.seed);
  CHECK(a.dataset.seed != b.dataset.seed);
  auto c = parse_config(tiny_doc());
  apply_seed(c, 5);
  CHECK(to_json(c) == to_json(a));
}

TEST_CASE("metrics CSV") {
  CHECK(metrics_header(3) == "round,overall_acc,per_class_acc_0,per_class_acc_1,per_class_acc_2,global_t,selected_user_freq_snapshot");
  std::vector<EvalPoint> pts{{25, 0.5, {0.1, std::nullopt, 1.0 / 3}, -0.125, {0.5, 0.25, 0.25}},
                             {50, 2.0 / 3, {1.0, 0.0, 0.7}, 1e-17, {0.48, 0.42, 0.1}}};
  std::ostringstream out;
  write_metrics_csv(out, pts, 3);
  const auto text = out.str();
  CHECK(text.rfind(metrics_header(3) + "\n", 0) == 0);
  CHECK(text.find("25,0.5,0.1,,") != std::string::npos);

  std::istringstream in(text);
  const auto back = parse_metrics_csv(in);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].round == pts[i].round);
    CHECK(back[i].overall_acc == pts[i].overall_acc);
    CHECK(back[i].per_class_acc == pts[i].per_class_acc);
    CHECK(back[i].global_t == pts[i].global_t);
    CHECK(back[i].selection_freq == pts[i].selection_freq);
  }

  std::istringstream bad("round,overall,acc\n1,2,3\n");
  CHECK_THROWS_AS(parse_metrics_csv(bad), ParseError);
}

TEST_CASE("summaries average the trailing points") {
  std::vector<EvalPoint> pts;
  for (int i = 1; i <= 4; ++i) pts.push_back({static_cast<std::size_t>(i), 0.1 * i, {0.2 * i, std::nullopt}, 0, {}});
  const auto s = summarize(pts, 2, {0, 1});
  CHECK(s.overall == doctest::Approx(0.35));
  CHECK(*s.per_class[0] == doctest::Approx(0.7));
  CHECK_FALSE(s.per_class[1].has_value());
  CHECK(*s.rare_mean == doctest::Approx(0.7));
  CHECK(summarize(pts, 100, {}).overall == doctest::Approx(0.25));
}

TEST_CASE("parameter snapshots") {
  const auto arch = ModelArch::mlp(5, {4, 3}, 2);
  auto p = init_params(arch, 17);
  p.values[1] = -0.0;
  p.values[2] = 5e-324;
  const auto bytes = encode_snapshot(p);
  CHECK(bytes.size() == 4 + 4 * 4 + 4 + 2 * 4 + 8 + 8 * arch.param_count());
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FCVP");
  const auto back = decode_snapshot(bytes);
  CHECK(back.arch == arch);
  CHECK(std::memcmp(back.values.data(), p.values.data(), p.values.size() * 8) == 0);

  test_support::TempDir tmp("snap");
  write_snapshot(tmp.path() / "p.bin", p);
  CHECK(read_snapshot(tmp.path() / "p.bin").values == p.values);

  auto corrupt = [&](auto&& edit) {
    auto b = bytes;
    edit(b);
    CHECK_THROWS_AS(decode_snapshot(b), ParseError);
  };
  corrupt([](auto& b) { b[0] = 'X'; });
  corrupt([](auto& b) { b[4] = 9; });
  corrupt([](auto& b) { b[8] = 7; });
  corrupt([](auto& b) { b.pop_back(); });
  corrupt([](auto& b) { b.push_back(0); });
  corrupt([](auto& b) { b.resize(10); });
  corrupt([](auto& b) { b[24] = 0; });  // a zero hidden width
  corrupt([](auto& b) {
    const double nan = std::nan("");
    std::memcpy(b.data() + b.size() - 8, &nan, 8);
  });
  CHECK_THROWS(read_snapshot(tmp.path() / "missing.bin"));
}

TEST_CASE("atomic writes leave no temporary files") {
  test_support::TempDir tmp("atomic");
  const auto target = tmp.path() / "nested" / "out.txt";
  write_file_atomic(target, std::string_view("first"));
  write_file_atomic(target, std::string_view("second"));
  CHECK(slurp(target) == "second");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(target.parent_path())) ++entries;
  CHECK(entries == 1);
  CHECK_THROWS(write_file_atomic(tmp.path() / "nested", std::string_view("over a directory")));
  entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(target.parent_path())) ++entries;
  CHECK(entries == 1);
}

TEST_CASE("moving average and charts") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(svg::moving_average(v, 1) == v);
  CHECK(svg::moving_average(v, 2) == std::vector<double>{1, 1.5, 2.5, 3.5});
  CHECK(svg::moving_average(v, 10) == std::vector<double>{1, 1.5, 2, 2.5});
  CHECK_THROWS_AS(svg::moving_average(v, 0), InvalidArgument);

  svg::LineChart one{"single", "round", "acc", {}, true};
  svg::add_raw_and_smoothed(one, "acc", {25}, {0.5}, svg::palette(0), 50);
  const auto s = svg::render_line_chart(one);
  CHECK(s.rfind("<svg", 0) == 0);
  CHECK(s.find("</svg>") != std::string::npos);
  CHECK(s.find("<circle") != std::string::npos);
  CHECK(s.find("nan") == std::string::npos);
  CHECK(s.find("inf") == std::string::npos);

  svg::LineChart empty{"empty", "x", "y", {}, false};
  const auto e = svg::render_line_chart(empty);
  CHECK(e.find("</svg>") != std::string::npos);
  CHECK(e.find("nan") == std::string::npos);
}

TEST_CASE("end-to-end run writes consistent artifacts and reruns byte-identically") {
  test_support::TempDir tmp("run");
  const auto cfg = parse_config(tiny_doc());
  RunOptions opts;
  opts.out_dir = tmp.path() / "a";
  const auto a = run_experiment(cfg, opts);
  REQUIRE(a.ok());
  CHECK(a.rounds_completed == 30);
  CHECK(a.points.size() == 3);
  CHECK(a.rare_classes == std::vector<int>{2});
  for (const char* f : {"metrics.csv", "run.json", "params.bin", "accuracy.svg", "per_class_accuracy.svg",
                        "global_t.svg", "ram.svg", "boundary.svg"})
    CHECK(fs::exists(opts.out_dir / f));

  std::ifstream csv(opts.out_dir / "metrics.csv");
  const auto pts = parse_metrics_csv(csv);
  REQUIRE(pts.size() == 3);
  CHECK(pts.back().round == 30);
  CHECK(pts.back().overall_acc == a.points.back().overall_acc);

  const auto meta = json::parse(slurp(opts.out_dir / "run.json"));
  CHECK(meta["status"] == "ok");
  CHECK(meta["rounds_completed"] == 30);
  CHECK(read_snapshot(opts.out_dir / "params.bin").values == a.theta.values);

  opts.out_dir = tmp.path() / "b";
  const auto b = run_experiment(cfg, opts);
  CHECK(slurp(tmp.path() / "a" / "metrics.csv") == slurp(tmp.path() / "b" / "metrics.csv"));
  CHECK(slurp(tmp.path() / "a" / "params.bin") == slurp(tmp.path() / "b" / "params.bin"));

  auto lazy = cfg;
  lazy.train.relayed_only = true;
  opts.out_dir = tmp.path() / "c";
  run_experiment(lazy, opts);
  CHECK(slurp(tmp.path() / "a" / "metrics.csv") == slurp(tmp.path() / "c" / "metrics.csv"));
}

TEST_CASE("a diverging run reports failure instead of throwing") {
  test_support::TempDir tmp("diverge");
  auto doc = tiny_doc();
  doc["train"]["lr_theta"] = 1e306;
  doc["eval"]["charts"] = false;
  RunOptions opts;
  opts.out_dir = tmp.path();
  const auto r = run_experiment(parse_config(doc), opts);
  CHECK_FALSE(r.ok());
  const auto meta = json::parse(slurp(tmp.path() / "run.json"));
  CHECK(meta["status"] == "diverged");
}

TEST_CASE("sweeps") {
  test_support::TempDir tmp("sweep");
  auto doc = tiny_doc();
  doc["train"]["rounds"] = 10;
  doc["eval"]["charts"] = false;
  const auto cfg = parse_config(doc);

  const auto one = sweep(cfg, {0.5}, {1.0}, 1, 7, tmp.path() / "one", false);
  REQUIRE(one.cells.size() == 1);
  CHECK(one.cells[0].runs == 1);
  CHECK(one.cells[0].overall.std == 0.0);

  const std::vector<double> alphas{0.1, 0.3, 0.5, 0.7, 1.0}, gammas{0.0, 0.3, 0.6, 1.0};
  const auto grid = sweep(cfg, alphas, gammas, 1, 7, tmp.path() / "grid", false);
  CHECK(grid.cells.size() == 20);
  std::ostringstream out;
  write_sweep_csv(out, grid);
  std::istringstream lines(out.str());
  std::string header, line;
  std::getline(lines, header);
  CHECK(header == "alpha,gamma,runs,failures,overall_mean,overall_std,class_2_mean,class_2_std");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 20);

  const auto again = sweep(cfg, {0.5}, {1.0}, 1, 7, tmp.path() / "again", true);
  CHECK(again.cells[0].overall.mean == one.cells[0].overall.mean);
  CHECK(fs::exists(tmp.path() / "again" / "a0.5_g1" / "r0" / "metrics.csv"));

  CHECK(sweep_seed(1, 0.5, 1.0, 0) != sweep_seed(1, 0.5, 1.0, 1));
  CHECK(sweep_seed(1, 0.5, 1.0, 0) != sweep_seed(1, 1.0, 0.5, 0));
}

TEST_CASE("data loading from the bundled subset and the data-root override") {
  auto doc = json::parse(R"({
    "name": "mnist-tiny",
    "dataset": {"kind": "mnist", "train_limit": 600, "test_limit": 200},
    "partition": {"num_users": 10, "frequent_percent": 80, "frequent_pattern_percent": 90},
    "ram": {"kind": "tail_three", "param": 0.8},
    "model": {"kind": "logreg"}
  })");
  auto cfg = parse_config(doc);
  cfg.source_dir = test_support::source_dir() / "configs";
  CHECK(resolve_arch(cfg).input_dim == 784);
  const auto data = load_data(cfg);
  CHECK(data.train.size() == 600);
  CHECK(data.test.size() == 200);
  CHECK(data.shards.size() == 10);

  cfg.dataset.dir = "no-such-dataset";
  try {
    load_data(cfg);
    FAIL("missing files accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(kDataDirEnv) != std::string::npos);
  }
}

TEST_CASE("self-checks pass on a few trials") {
  CHECK(checks::check_composite_gradients(10, 3).passed());
  CHECK(checks::check_cvar(20, 3).passed());
}
