#pragma once

// Random Access Model: a stationary, memoryless erasure channel that lets
// exactly one user's (theta, t) pair through per round. The selection
// weights stay private to this module; training code can only call
// `relay`. Reading the weights (for run metadata and charts) goes through
// RamAuditor, which the training sources are compiled without.

#include <cstddef>
#include <span>
#include <vector>

#include "fedcvar/numerics.hpp"
#include "fedcvar/rng.hpp"

namespace fedcvar::ram {

class RamAuditor;

class RamDistribution {
 public:
  std::size_t num_users() const noexcept { return cumulative_.size(); }

 private:
  explicit RamDistribution(std::vector<double> weights);

  std::vector<double> weights_;
  std::vector<double> cumulative_;

  friend RamDistribution make_ram(std::span<const double> raw_weights);
  friend std::size_t sample(const RamDistribution& ram, Rng& rng);
  friend class RamAuditor;
};

/// Normalized copy of `raw_weights`. Throws InvalidDistribution on an empty,
/// negative, non-finite or all-zero vector.
RamDistribution make_ram(std::span<const double> raw_weights);

/// Inverse-CDF draw over the cumulative weights in index order.
std::size_t sample(const RamDistribution& ram, Rng& rng);

enum class SkewKind { Geometric, TailThree };

/// The fixed tail probabilities of the three least available users.
inline constexpr double kTailThree[3] = {0.0107, 0.0078, 0.0053};

/// Geometric: weight_i proportional to param^i, param in (0, 1).
/// TailThree: the last three users get kTailThree exactly; the others share
/// the remainder in proportion to param^i. Requires K >= 4.
std::vector<double> skewed_weights(std::size_t num_users, SkewKind kind, double param);

/// A user's locally held state, as offered to the channel.
struct LocalState {
  ModelParams theta;
  double t = 0.0;
};

struct Relayed {
  std::size_t index = 0;
  LocalState state;
};

/// Samples one user and passes its pair through unchanged; every other
/// candidate is dropped.
Relayed relay(const RamDistribution& ram, Rng& rng, std::span<const LocalState> candidates);

#ifndef FEDCVAR_HIDE_RAM_WEIGHTS
class RamAuditor {
 public:
  static const std::vector<double>& weights(const RamDistribution& ram) { return ram.weights_; }
};
#endif

}  // namespace fedcvar::ram
