#pragma once

// Federated round engine. Every round the RAM relays one user's (theta, t)
// pair, the server broadcasts it, and every user runs H local epochs of the
// joint (theta, t) step on its own shard starting from the broadcast pair.
// FedAvg is the gamma = 1 case.
//
// This module sees the RAM only through ram::relay; it never reads the
// selection weights.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fedcvar/data.hpp"
#include "fedcvar/error.hpp"
#include "fedcvar/numerics.hpp"
#include "fedcvar/ram.hpp"
#include "fedcvar/risk.hpp"
#include "fedcvar/rng.hpp"

namespace fedcvar::fed {

struct Seeds {
  std::uint64_t init = 1;
  std::uint64_t ram = 2;
  std::uint64_t shuffle = 3;
};

struct TrainConfig {
  ModelArch arch;
  std::size_t global_rounds = 1;  // T
  std::size_t local_epochs = 1;   // H
  std::size_t batch_size = 64;    // B
  double lr_theta = 1e-3;
  double lr_t = 1e-4;
  risk::RiskConfig risk;
  Seeds seeds;
  double t_init = 0.0;
  std::size_t workers = 1;
  bool epoch_diagnostics = false;  // record full-shard G_i after each local epoch
  /// Compute only the local update the channel will relay next round. The
  /// RAM draws come from their own stream, so the selection is drawn one
  /// round ahead and every discarded update is skipped; the global
  /// trajectory is bit-identical to the full computation, but stored states
  /// of the other users go stale.
  bool relayed_only = false;

  void validate() const;
};

struct UserShard {
  std::size_t user_id = 0;
  Dataset data;
  ram::LocalState local;
};

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  std::size_t selected_user = 0;
  double t_global = 0.0;
  double train_loss_selected = 0.0;  // f_i(theta_global) on the selected user's shard
  /// Per user, full-shard G_i after each local epoch (only with epoch_diagnostics).
  std::vector<std::vector<double>> epoch_objective;
};

using RunHistory = std::vector<RoundRecord>;

struct GlobalState {
  std::size_t round = 0;  // rounds completed
  ModelParams theta_global;
  double t_global = 0.0;
  std::vector<UserShard> users;
  RunHistory log;
  std::optional<std::size_t> next_selected;  // drawn ahead in relayed_only mode
};

struct LocalUpdate {
  ram::LocalState state;
  std::vector<double> epoch_objective;
};

/// H local epochs of the joint step from `start`. Throws DivergenceError.
LocalUpdate local_update(const UserShard& shard, const ram::LocalState& start,
                         const TrainConfig& cfg, std::size_t round);

/// All users start from the same initial (theta, t).
GlobalState init_state(std::vector<Dataset> datasets, const TrainConfig& cfg);

/// One round: relay, broadcast, local updates, log. On divergence the state
/// is left as it was before the round and the error propagates.
void run_round(GlobalState& state, const ram::RamDistribution& ram, const TrainConfig& cfg,
               Rng& ram_rng);

using RoundObserver = std::function<void(const GlobalState&)>;

struct TrainResult {
  GlobalState state;
  std::optional<DivergenceError> failure;  // set when training aborted early
};

/// T rounds of training. `observer` runs after every completed round.
TrainResult train(std::vector<Dataset> datasets, const ram::RamDistribution& ram,
                  const TrainConfig& cfg, const RoundObserver& observer = {});

/// The RAM stream for a given seed; train() uses the same derivation.
Rng ram_stream(const Seeds& seeds);

/// Batch-shuffle seed of one user's local run in one round.
std::uint64_t shuffle_seed(const Seeds& seeds, std::size_t user, std::size_t round);

struct Metrics {
  double overall_acc = 0.0;
  std::vector<std::optional<double>> per_class_acc;  // nullopt for classes absent from test
};

Metrics evaluate(const ModelParams& theta, const Dataset& test);

/// Predicted class per row (first maximum on ties).
std::vector<int> predict(const ModelParams& theta, const Matrix& features);

/// Full-shard composite objective G_i(theta, t).
double full_shard_objective(const Dataset& data, const ModelParams& theta, double t,
                            const risk::RiskConfig& cfg);

}  // namespace fedcvar::fed
