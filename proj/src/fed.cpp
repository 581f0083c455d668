#include "fedcvar/fed.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

namespace fedcvar::fed {
namespace {

constexpr std::uint64_t kRamStream = 0x7a3ULL;
constexpr std::uint64_t kShuffleStream = 0x5b1ULL;

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// Runs job(i) for i in [0, n) on `workers` threads. Exceptions are collected
// per index so the reported failure does not depend on scheduling.
template <class Job>
void parallel_for(std::size_t n, std::size_t workers, Job&& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto drain = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto extra = std::min(workers, n) > 1 ? std::min(workers, n) - 1 : 0;
  std::vector<std::jthread> pool;
  pool.reserve(extra);
  for (std::size_t w = 0; w < extra; ++w) pool.emplace_back(drain);
  drain();
  pool.clear();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void TrainConfig::validate() const {
  arch.validate();
  risk.validate();
  if (local_epochs < 1) throw InvalidArgument("local_epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(lr_theta > 0.0) || !std::isfinite(lr_theta)) throw InvalidArgument("lr_theta must be > 0");
  if (!(lr_t >= 0.0) || !std::isfinite(lr_t)) throw InvalidArgument("lr_t must be >= 0");
  if (!std::isfinite(t_init)) throw InvalidArgument("t_init must be finite");
  if (workers < 1) throw InvalidArgument("workers must be >= 1");
  if (relayed_only && epoch_diagnostics)
    throw InvalidArgument("epoch_diagnostics needs every user's update; disable relayed_only");
}

Rng ram_stream(const Seeds& seeds) { return Rng(derive_seed({seeds.ram, kRamStream})); }

std::uint64_t shuffle_seed(const Seeds& seeds, std::size_t user, std::size_t round) {
  return derive_seed({seeds.shuffle, kShuffleStream, user, round});
}

double full_shard_objective(const Dataset& data, const ModelParams& theta, double t,
                            const risk::RiskConfig& cfg) {
  return risk::composite_loss(batch_loss(theta, as_batch(data)), t, cfg);
}

LocalUpdate local_update(const UserShard& shard, const ram::LocalState& start,
                         const TrainConfig& cfg, std::size_t round) {
  if (shard.data.size() == 0) throw InvalidArgument("empty user shard");
  LocalUpdate out{start, {}};
  auto& theta = out.state.theta.values;
  double& t = out.state.t;
  std::vector<double> grad(theta.size());
  const auto bsize = std::min(cfg.batch_size, shard.data.size());
  const auto seed = shuffle_seed(cfg.seeds, shard.user_id, round);

  for (std::size_t epoch = 1; epoch <= cfg.local_epochs; ++epoch) {
    for (const auto& batch : batches(shard.data, bsize, seed, epoch)) {
      double f = 0.0;
      try {
        f = loss_and_grad(out.state.theta, batch, grad);
      } catch (const NumericalError&) {
        throw DivergenceError(round, shard.user_id, epoch);
      }
      // Joint step: both gradients are taken at the pre-step (theta, t).
      const auto s = risk::composite_scale(f, t, cfg.risk);
      const double step = cfg.lr_theta * s.theta_scale;
      for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= step * grad[j];
      t -= cfg.lr_t * s.grad_t;
      if (!std::isfinite(t) || !all_finite(theta)) {
        throw DivergenceError(round, shard.user_id, epoch);
      }
    }
    if (cfg.epoch_diagnostics) {
      out.epoch_objective.push_back(full_shard_objective(shard.data, out.state.theta, t, cfg.risk));
    }
  }
  return out;
}

GlobalState init_state(std::vector<Dataset> datasets, const TrainConfig& cfg) {
  cfg.validate();
  if (datasets.empty()) throw InvalidArgument("no user datasets");
  GlobalState state;
  state.theta_global = init_params(cfg.arch, cfg.seeds.init);
  state.t_global = cfg.t_init;
  for (std::size_t u = 0; u < datasets.size(); ++u) {
    datasets[u].validate();
    if (datasets[u].dim() != cfg.arch.input_dim) {
      throw InvalidArgument("user " + std::to_string(u) + " features do not match input_dim");
    }
    state.users.push_back(UserShard{u, std::move(datasets[u]), {state.theta_global, cfg.t_init}});
  }
  return state;
}

void run_round(GlobalState& state, const ram::RamDistribution& ram, const TrainConfig& cfg,
               Rng& ram_rng) {
  const std::size_t round = state.round + 1;
  ram::Relayed relayed;
  if (cfg.relayed_only) {
    const std::size_t i = state.next_selected ? *state.next_selected : ram::sample(ram, ram_rng);
    relayed = {i, state.users[i].local};
  } else {
    std::vector<ram::LocalState> candidates;
    candidates.reserve(state.users.size());
    for (const auto& u : state.users) candidates.push_back(u.local);
    relayed = ram::relay(ram, ram_rng, candidates);
  }

  RoundRecord rec;
  rec.round = round;
  rec.selected_user = relayed.index;
  rec.t_global = relayed.state.t;
  rec.train_loss_selected =
      batch_loss(relayed.state.theta, as_batch(state.users[relayed.index].data));

  if (cfg.relayed_only) {
    const std::size_t next = ram::sample(ram, ram_rng);
    auto update = local_update(state.users[next], relayed.state, cfg, round);
    state.users[next].local = std::move(update.state);
    state.next_selected = next;
  } else {
    std::vector<LocalUpdate> updates(state.users.size());
    parallel_for(state.users.size(), cfg.workers, [&](std::size_t i) {
      updates[i] = local_update(state.users[i], relayed.state, cfg, round);
    });
    for (std::size_t i = 0; i < state.users.size(); ++i) {
      state.users[i].local = std::move(updates[i].state);
      if (cfg.epoch_diagnostics) rec.epoch_objective.push_back(std::move(updates[i].epoch_objective));
    }
  }
  state.theta_global = std::move(relayed.state.theta);
  state.t_global = relayed.state.t;
  state.round = round;
  state.log.push_back(std::move(rec));
}

TrainResult train(std::vector<Dataset> datasets, const ram::RamDistribution& ram,
                  const TrainConfig& cfg, const RoundObserver& observer) {
  if (datasets.size() != ram.num_users()) {
    throw InvalidArgument("got " + std::to_string(datasets.size()) + " user datasets for a RAM over " +
                          std::to_string(ram.num_users()) + " users");
  }
  TrainResult result{init_state(std::move(datasets), cfg), std::nullopt};
  Rng rng = ram_stream(cfg.seeds);
  for (std::size_t n = 0; n < cfg.global_rounds; ++n) {
    try {
      run_round(result.state, ram, cfg, rng);
    } catch (const DivergenceError& e) {
      result.failure = e;
      break;
    }
    if (observer) observer(result.state);
  }
  return result;
}

std::vector<int> predict(const ModelParams& theta, const Matrix& features) {
  const Matrix logits = forward(theta, features);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

Metrics evaluate(const ModelParams& theta, const Dataset& test) {
  if (test.size() == 0) throw InvalidArgument("empty test set");
  const auto pred = predict(theta, test.features);
  std::vector<std::size_t> hit(test.num_classes, 0), seen(test.num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto y = static_cast<std::size_t>(test.labels[i]);
    ++seen[y];
    if (pred[i] == test.labels[i]) {
      ++hit[y];
      ++correct;
    }
  }
  Metrics m;
  m.overall_acc = static_cast<double>(correct) / static_cast<double>(pred.size());
  for (std::size_t c = 0; c < test.num_classes; ++c) {
    m.per_class_acc.push_back(seen[c] ? std::optional<double>(static_cast<double>(hit[c]) /
                                                              static_cast<double>(seen[c]))
                                      : std::nullopt);
  }
  return m;
}

}  // namespace fedcvar::fed
