#include "fedcvar/ram.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedcvar/error.hpp"

namespace fedcvar::ram {

RamDistribution::RamDistribution(std::vector<double> weights) : weights_(std::move(weights)) {
  cumulative_.resize(weights_.size());
  double run = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    run += weights_[i];
    cumulative_[i] = run;
    if (weights_[i] > 0.0) last_positive = i;
  }
  // Pin the top of the CDF so every u in [0, 1) lands on a positive weight.
  std::fill(cumulative_.begin() + static_cast<std::ptrdiff_t>(last_positive), cumulative_.end(),
            1.0);
}

RamDistribution make_ram(std::span<const double> raw_weights) {
  if (raw_weights.empty()) throw InvalidDistribution("RAM needs at least one user");
  double total = 0.0;
  for (std::size_t i = 0; i < raw_weights.size(); ++i) {
    const double w = raw_weights[i];
    if (!std::isfinite(w) || w < 0.0) {
      throw InvalidDistribution("RAM weight " + std::to_string(i) + " is negative or non-finite");
    }
    total += w;
  }
  if (!(total > 0.0)) throw InvalidDistribution("RAM weights are all zero");
  std::vector<double> w(raw_weights.begin(), raw_weights.end());
  for (auto& x : w) x /= total;
  return RamDistribution(std::move(w));
}

std::size_t sample(const RamDistribution& ram, Rng& rng) {
  const double u = rng.uniform();
  const auto it = std::upper_bound(ram.cumulative_.begin(), ram.cumulative_.end(), u);
  return static_cast<std::size_t>(it - ram.cumulative_.begin());
}

std::vector<double> skewed_weights(std::size_t num_users, SkewKind kind, double param) {
  if (num_users < 2) throw InvalidArgument("skewed weights need K >= 2");
  if (!(param > 0.0 && param < 1.0)) {
    throw InvalidArgument("skew parameter must lie in (0, 1), got " + std::to_string(param));
  }
  auto geometric = [param](std::size_t n, double mass) {
    std::vector<double> w(n);
    double p = 1.0, total = 0.0;
    for (auto& x : w) {
      x = p;
      total += p;
      p *= param;
    }
    for (auto& x : w) x = mass * x / total;
    return w;
  };
  if (kind == SkewKind::Geometric) return geometric(num_users, 1.0);

  if (num_users < 4) throw InvalidArgument("TailThree weights need K >= 4");
  const double tail = kTailThree[0] + kTailThree[1] + kTailThree[2];
  auto w = geometric(num_users - 3, 1.0 - tail);
  w.insert(w.end(), std::begin(kTailThree), std::end(kTailThree));
  return w;
}

Relayed relay(const RamDistribution& ram, Rng& rng, std::span<const LocalState> candidates) {
  if (candidates.size() != ram.num_users()) {
    throw InvalidArgument("relay got " + std::to_string(candidates.size()) +
                          " candidates for a RAM over " + std::to_string(ram.num_users()) +
                          " users");
  }
  const auto i = sample(ram, rng);
  return Relayed{i, candidates[i]};
}

}  // namespace fedcvar::ram
