#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "fedcvar/error.hpp"
#include "fedcvar/fed.hpp"
#include "test_support.hpp"

using namespace fedcvar;
using namespace fedcvar::fed;

namespace {

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

TrainConfig blob_config(std::size_t rounds, double alpha, double gamma) {
  TrainConfig cfg;
  cfg.arch = ModelArch::logreg(2, 3);
  cfg.global_rounds = rounds;
  cfg.local_epochs = 2;
  cfg.batch_size = 16;
  cfg.lr_theta = 0.05;
  cfg.lr_t = 0.01;
  cfg.risk = {alpha, gamma};
  cfg.seeds = {11, 12, 13};
  return cfg;
}

const std::vector<double> kRho{0.5, 0.4, 0.1};

std::vector<std::vector<double>> global_path(const std::vector<Dataset>& shards,
                                             const ram::RamDistribution& ram, const TrainConfig& cfg) {
  std::vector<std::vector<double>> path;
  const auto r = train(shards, ram, cfg, [&](const GlobalState& s) { path.push_back(s.theta_global.values); });
  REQUIRE_FALSE(r.failure);
  return path;
}

}  // namespace

TEST_CASE("zero step sizes leave the local state unchanged") {
  const auto shards = test_support::blob_shards(1);
  auto cfg = blob_config(1, 0.3, 0.2);
  cfg.lr_theta = 0.0;
  cfg.lr_t = 0.0;
  const ram::LocalState start{init_params(cfg.arch, 4), 0.37};
  const auto out = local_update(UserShard{0, shards[0], start}, start, cfg, 1);
  CHECK(bit_equal(out.state.theta.values, start.theta.values));
  CHECK(out.state.t == 0.37);
}

TEST_CASE("gamma = 1 keeps t fixed and follows plain SGD") {
  const auto shards = test_support::blob_shards(2);
  const auto cfg = blob_config(1, 0.2, 1.0);
  const ram::LocalState start{init_params(cfg.arch, 4), 0.5};
  const auto out = local_update(UserShard{1, shards[1], start}, start, cfg, 3);
  CHECK(out.state.t == 0.5);

  auto p = start.theta;
  const auto B = std::min(cfg.batch_size, shards[1].size());
  for (std::size_t h = 1; h <= cfg.local_epochs; ++h)
    for (const auto& b : batches(shards[1], B, shuffle_seed(cfg.seeds, 1, 3), h)) {
      const auto lg = loss_and_grad(p, b);
      for (std::size_t j = 0; j < p.values.size(); ++j) p.values[j] -= cfg.lr_theta * lg.grad[j];
    }
  CHECK(bit_equal(out.state.theta.values, p.values));
}

TEST_CASE("one hand-worked local step") {
  // Zero logistic model, one sample x = (0.3, -1.2) of class 1, t = 0.
  // f = ln 3 > t, so theta_scale = (1 - g)/a + g = 1.5 and grad_t = (1 - g)(1 - 1/a) = -0.5.
  Dataset d;
  d.features.resize(1, 2);
  d.features << 0.3, -1.2;
  d.labels = {1};
  d.num_classes = 3;
  TrainConfig cfg;
  cfg.arch = ModelArch::logreg(2, 3);
  cfg.local_epochs = 1;
  cfg.batch_size = 1;
  cfg.lr_theta = 0.1;
  cfg.lr_t = 0.05;
  cfg.risk = {0.5, 0.5};
  const ram::LocalState start{{cfg.arch, std::vector<double>(9, 0.0)}, 0.0};
  const auto out = local_update(UserShard{0, d, start}, start, cfg, 1);

  const double db[3] = {1.0 / 3, -2.0 / 3, 1.0 / 3};
  const double x[2] = {0.3, -1.2};
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::abs(out.state.theta.values[6 + k] - (-0.1 * 1.5 * db[k])) <= 1e-12);
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(std::abs(out.state.theta.values[k * 2 + j] - (-0.1 * 1.5 * db[k] * x[j])) <= 1e-12);
  }
  CHECK(std::abs(out.state.t - 0.025) <= 1e-12);

  // Below the threshold only the mean term acts and t moves up.
  const ram::LocalState high{{cfg.arch, std::vector<double>(9, 0.0)}, 5.0};
  const auto below = local_update(UserShard{0, d, high}, high, cfg, 1);
  CHECK(std::abs(below.state.theta.values[7] - (-0.1 * 0.5 * db[1])) <= 1e-12);
  CHECK(std::abs(below.state.t - (5.0 - 0.05 * 0.5)) <= 1e-12);
}

TEST_CASE("a single user reduces to centralized training on its composite loss") {
  const auto shards = test_support::blob_shards(3);
  const auto cfg = blob_config(6, 0.3, 0.3);
  const auto r = train({shards[0]}, ram::make_ram(std::vector<double>{1.0}), cfg);
  REQUIRE_FALSE(r.failure);

  ram::LocalState s{init_params(cfg.arch, cfg.seeds.init), cfg.t_init};
  for (std::size_t n = 1; n <= cfg.global_rounds; ++n) {
    CHECK(r.state.log[n - 1].selected_user == 0);
    s = local_update(UserShard{0, shards[0], s}, s, cfg, n).state;
  }
  CHECK(bit_equal(r.state.users[0].local.theta.values, s.theta.values));
  CHECK(r.state.users[0].local.t == s.t);
}

TEST_CASE("point-mass channel always relays the same user while the others keep training") {
  const auto shards = test_support::blob_shards(4);
  const auto cfg = blob_config(8, 0.3, 0.3);
  const auto ram = ram::make_ram(std::vector<double>{0, 1, 0});
  auto state = init_state(shards, cfg);
  Rng rng = ram_stream(cfg.seeds);
  auto prev0 = state.users[0].local.theta.values;
  for (std::size_t n = 1; n <= cfg.global_rounds; ++n) {
    const auto held = state.users[1].local;
    run_round(state, ram, cfg, rng);
    CHECK(state.log.back().selected_user == 1);
    CHECK(bit_equal(state.theta_global.values, held.theta.values));
    CHECK(state.t_global == held.t);
    CHECK_FALSE(bit_equal(state.users[0].local.theta.values, prev0));
    prev0 = state.users[0].local.theta.values;
  }
}

TEST_CASE("broadcast fidelity: every user starts from the relayed pair") {
  const auto shards = test_support::blob_shards(5);
  const auto cfg = blob_config(10, 0.2, 0.1);
  const auto ram = ram::make_ram(kRho);
  auto state = init_state(shards, cfg);
  Rng rng = ram_stream(cfg.seeds);
  for (std::size_t n = 1; n <= cfg.global_rounds; ++n) {
    const auto before = state.users;
    run_round(state, ram, cfg, rng);
    const auto sel = state.log.back().selected_user;
    const auto& relayed = before[sel].local;
    CHECK(bit_equal(state.theta_global.values, relayed.theta.values));
    CHECK(bit_equal(state.t_global, relayed.t));
    for (std::size_t u = 0; u < before.size(); ++u) {
      const auto expect = local_update(before[u], relayed, cfg, n).state;
      CHECK(bit_equal(state.users[u].local.theta.values, expect.theta.values));
      CHECK(bit_equal(state.users[u].local.t, expect.t));
    }
  }
}

TEST_CASE("runs are deterministic and independent of the worker count") {
  const auto shards = test_support::blob_shards(6);
  auto cfg = blob_config(40, 0.2, 0.1);
  const auto ram = ram::make_ram(kRho);
  const auto a = train(shards, ram, cfg);
  const auto b = train(shards, ram, cfg);
  cfg.workers = 3;
  const auto c = train(shards, ram, cfg);
  for (const auto* other : {&b, &c}) {
    REQUIRE(other->state.log.size() == a.state.log.size());
    for (std::size_t n = 0; n < a.state.log.size(); ++n) {
      CHECK(other->state.log[n].selected_user == a.state.log[n].selected_user);
      CHECK(bit_equal(other->state.log[n].t_global, a.state.log[n].t_global));
      CHECK(bit_equal(other->state.log[n].train_loss_selected, a.state.log[n].train_loss_selected));
    }
    CHECK(bit_equal(other->state.theta_global.values, a.state.theta_global.values));
    for (std::size_t u = 0; u < 3; ++u)
      CHECK(bit_equal(other->state.users[u].local.theta.values, a.state.users[u].local.theta.values));
  }
  cfg.seeds.ram += 1;
  const auto d = train(shards, ram, cfg);
  CHECK_FALSE(bit_equal(d.state.theta_global.values, a.state.theta_global.values));
}

TEST_CASE("relayed-only mode reproduces the full global trajectory") {
  const auto shards = test_support::blob_shards(7);
  auto cfg = blob_config(60, 0.2, 0.1);
  const auto ram = ram::make_ram(kRho);
  const auto full = global_path(shards, ram, cfg);
  const auto full_run = train(shards, ram, cfg);
  cfg.relayed_only = true;
  const auto lazy = global_path(shards, ram, cfg);
  const auto lazy_run = train(shards, ram, cfg);
  REQUIRE(lazy.size() == full.size());
  for (std::size_t n = 0; n < full.size(); ++n) {
    CHECK(bit_equal(lazy[n], full[n]));
    CHECK(lazy_run.state.log[n].selected_user == full_run.state.log[n].selected_user);
    CHECK(bit_equal(lazy_run.state.log[n].t_global, full_run.state.log[n].t_global));
  }

  cfg.epoch_diagnostics = true;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("gamma = 1 matches an independent FedAvg loop") {
  const auto shards = test_support::blob_shards(8);
  auto cfg = blob_config(50, 0.3, 1.0);
  const auto path = global_path(shards, ram::make_ram(kRho), cfg);
  const auto ref = test_support::reference_fedavg(shards, kRho, cfg.arch, cfg.global_rounds, cfg.local_epochs,
                                                  cfg.batch_size, cfg.lr_theta, cfg.seeds);
  REQUIRE(path.size() == ref.theta_global.size());
  double worst = 0;
  for (std::size_t n = 0; n < path.size(); ++n)
    for (std::size_t j = 0; j < path[n].size(); ++j) worst = std::max(worst, std::abs(path[n][j] - ref.theta_global[n][j]));
  CHECK(worst <= 1e-12);

  const auto r = train(shards, ram::make_ram(kRho), cfg);
  for (const auto& rec : r.state.log) CHECK(rec.t_global == cfg.t_init);
  for (std::size_t n = 0; n < ref.selected.size(); ++n) CHECK(r.state.log[n].selected_user == ref.selected[n]);
}

TEST_CASE("zero rounds and bad inputs") {
  const auto shards = test_support::blob_shards(9);
  auto cfg = blob_config(0, 0.5, 0.5);
  const auto r = train(shards, ram::make_ram(kRho), cfg);
  CHECK(r.state.log.empty());
  CHECK(r.state.round == 0);
  CHECK(bit_equal(r.state.theta_global.values, init_params(cfg.arch, cfg.seeds.init).values));
  CHECK(r.state.t_global == cfg.t_init);

  CHECK_THROWS_AS(train(shards, ram::make_ram(std::vector<double>{0.5, 0.5}), cfg), InvalidArgument);
  cfg.arch = ModelArch::logreg(3, 3);
  CHECK_THROWS_AS(train(shards, ram::make_ram(kRho), cfg), InvalidArgument);
  cfg = blob_config(1, 0.5, 0.5);
  cfg.lr_theta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = blob_config(1, 0.0, 0.5);
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("divergence aborts and keeps the history so far") {
  const auto shards = test_support::blob_shards(10);
  auto cfg = blob_config(200, 0.5, 0.5);
  cfg.lr_theta = 1e306;
  cfg.local_epochs = 1;
  std::size_t observed = 0;
  const auto r = train(shards, ram::make_ram(kRho), cfg, [&](const GlobalState&) { ++observed; });
  REQUIRE(r.failure);
  CHECK(r.state.log.size() == r.state.round);
  CHECK(observed == r.state.round);
  CHECK(r.failure->round() == r.state.round + 1);
  CHECK(r.failure->user() < 3);
  CHECK(r.failure->epoch() == 1);
}

TEST_CASE("evaluate") {
  const std::size_t C = 4;
  Dataset test;
  test.num_classes = C;
  test.features = Matrix::Zero(8, static_cast<Eigen::Index>(C));
  for (std::size_t i = 0; i < 8; ++i) {
    test.labels.push_back(static_cast<int>(i % C));
    test.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i % C)) = 1.0;
  }
  const auto arch = ModelArch::logreg(C, C);

  SUBCASE("constant class 0") {
    ModelParams p{arch, std::vector<double>(arch.param_count(), 0.0)};
    p.values[C * C] = 1.0;
    const auto m = evaluate(p, test);
    CHECK(m.overall_acc == 0.25);
    REQUIRE(m.per_class_acc.size() == C);
    CHECK(*m.per_class_acc[0] == 1.0);
    for (std::size_t c = 1; c < C; ++c) CHECK(*m.per_class_acc[c] == 0.0);
  }
  SUBCASE("perfect predictor") {
    ModelParams p{arch, std::vector<double>(arch.param_count(), 0.0)};
    for (std::size_t k = 0; k < C; ++k) p.values[k * C + k] = 1.0;
    const auto m = evaluate(p, test);
    CHECK(m.overall_acc == 1.0);
    for (const auto& a : m.per_class_acc) CHECK(*a == 1.0);
  }
  SUBCASE("absent classes are undefined, not zero") {
    Dataset partial = test;
    partial.labels = {0, 1, 0, 1, 0, 1, 0, 1};
    ModelParams p{arch, std::vector<double>(arch.param_count(), 0.0)};
    const auto m = evaluate(p, partial);
    CHECK(m.per_class_acc[0].has_value());
    CHECK_FALSE(m.per_class_acc[2].has_value());
    CHECK_FALSE(m.per_class_acc[3].has_value());
  }
  SUBCASE("random predictor on ten classes") {
    Rng rng(99);
    Dataset big;
    big.num_classes = 10;
    big.features.resize(10000, 5);
    for (Eigen::Index i = 0; i < big.features.size(); ++i) big.features.data()[i] = rng.normal();
    for (int i = 0; i < 10000; ++i) big.labels.push_back(static_cast<int>(rng.below(10)));
    const auto m = evaluate(init_params(ModelArch::logreg(5, 10), 3), big);
    CHECK(std::abs(m.overall_acc - 0.1) <= 0.01);
  }
  CHECK_THROWS_AS(evaluate(init_params(arch, 1), Dataset{Matrix(0, C), {}, C}), InvalidArgument);
}

TEST_CASE("risk-aware training narrows the spread of user losses") {
  // Sample std of f_i(theta_global) across the three users after training,
  // averaged over seeds, compared between alpha = 0.1 and alpha = 1.
  auto spread = [](double alpha, double gamma, std::uint64_t seed) {
    const auto shards = test_support::blob_shards(seed, 100);
    TrainConfig cfg;
    cfg.arch = ModelArch::logreg(2, 3);
    cfg.global_rounds = 300;
    cfg.local_epochs = 5;
    cfg.batch_size = 64;
    cfg.lr_theta = 0.01;
    cfg.lr_t = 1e-3;
    cfg.risk = {alpha, gamma};
    cfg.seeds = {derive_seed({seed, 1}), derive_seed({seed, 2}), derive_seed({seed, 3})};
    const auto r = train(shards, ram::make_ram(kRho), cfg);
    REQUIRE_FALSE(r.failure);
    std::vector<double> f;
    for (const auto& s : shards) f.push_back(batch_loss(r.state.theta_global, as_batch(s)));
    const double m = std::accumulate(f.begin(), f.end(), 0.0) / 3;
    double v = 0;
    for (double x : f) v += (x - m) * (x - m);
    return std::sqrt(v / 2);
  };
  double risk = 0, neutral = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    risk += spread(0.1, 0.1, s) / 10;
    neutral += spread(1.0, 0.1, s) / 10;
  }
  MESSAGE("mean loss spread: risk-aware " << risk << ", risk-neutral " << neutral);
  CHECK(risk < neutral);
}
