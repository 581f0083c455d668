#include "fedcvar/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fedcvar/error.hpp"

namespace fedcvar::risk {
namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidArgument("alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
}

double weighted_mean(std::span<const double> values, std::span<const double> probs) {
  double m = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) m += probs[i] * values[i];
  return m;
}

std::size_t grid_points(double t_lo, double t_hi, double step) {
  if (!(step > 0.0)) throw InvalidArgument("grid step must be positive");
  if (!(t_hi >= t_lo)) throw InvalidArgument("empty t-grid");
  return static_cast<std::size_t>(std::floor((t_hi - t_lo) / step + 1e-9)) + 1;
}

void check_grid_covers(std::span<const double> values, double t_lo, double t_hi) {
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (t_lo > *mn || t_hi < *mx) throw InvalidArgument("t-grid must cover [min, max] of values");
}

}  // namespace

void RiskConfig::validate() const {
  check_alpha(alpha);
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw InvalidArgument("gamma must lie in [0, 1], got " + std::to_string(gamma));
  }
}

void validate_distribution(std::span<const double> values, std::span<const double> probs) {
  if (values.empty()) throw InvalidArgument("empty distribution");
  if (values.size() != probs.size()) throw InvalidArgument("values and probs differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!std::isfinite(probs[i]) || probs[i] < 0.0) {
      throw InvalidArgument("probability " + std::to_string(i) + " is negative or non-finite");
    }
    if (!std::isfinite(values[i])) throw InvalidArgument("non-finite value");
    total += probs[i];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw InvalidArgument("probabilities sum to " + std::to_string(total) + ", not 1");
  }
}

double cvar_objective(std::span<const double> values, std::span<const double> probs, double alpha,
                      double t) {
  double excess = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) excess += probs[i] * std::max(values[i] - t, 0.0);
  return t + excess / alpha;
}

CvarResult cvar_with_threshold(std::span<const double> values, std::span<const double> probs,
                               double alpha) {
  validate_distribution(values, probs);
  check_alpha(alpha);

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (probs[i] > 0.0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  // Tail mean: walk down from the largest value until alpha mass is taken.
  double mass = 0.0, tail = 0.0;
  bool filled = false;
  for (auto i : order) {
    if (mass + probs[i] >= alpha) {
      tail += (alpha - mass) * values[i];
      filled = true;
      break;
    }
    tail += probs[i] * values[i];
    mass += probs[i];
  }
  if (!filled) tail += (alpha - mass) * values[order.back()];  // rounding left mass < alpha

  // Smallest minimizer: the lowest atom v with P(Z > v) <= alpha.
  double above = 0.0;
  double t_star = values[order.front()];
  for (std::size_t k = 0; k < order.size();) {
    const double v = values[order[k]];
    if (above > alpha + 1e-12) break;
    t_star = v;
    while (k < order.size() && values[order[k]] == v) above += probs[order[k++]];
  }
  return {tail / alpha, t_star};
}

double cvar_discrete(std::span<const double> values, std::span<const double> probs, double alpha) {
  return cvar_with_threshold(values, probs, alpha).value;
}

double cvar_grid_oracle(std::span<const double> values, std::span<const double> probs, double alpha,
                        double t_lo, double t_hi, double step) {
  validate_distribution(values, probs);
  check_alpha(alpha);
  check_grid_covers(values, t_lo, t_hi);
  const auto n = grid_points(t_lo, t_hi, step);
  auto at = [&](std::size_t k) {
    return cvar_objective(values, probs, alpha, t_lo + static_cast<double>(k) * step);
  };
  std::size_t lo = 0, hi = n - 1;
  while (lo < hi) {
    const auto mid = lo + (hi - lo) / 2;
    if (at(mid + 1) >= at(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return at(lo);
}

double cvar_grid_scan(std::span<const double> values, std::span<const double> probs, double alpha,
                      double t_lo, double t_hi, double step) {
  validate_distribution(values, probs);
  check_alpha(alpha);
  check_grid_covers(values, t_lo, t_hi);
  const auto n = grid_points(t_lo, t_hi, step);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    best = std::min(best, cvar_objective(values, probs, alpha, t_lo + static_cast<double>(k) * step));
  }
  return best;
}

double composite_loss(double f, double t, const RiskConfig& cfg) {
  return (1.0 - cfg.gamma) * (t + std::max(f - t, 0.0) / cfg.alpha) + cfg.gamma * f;
}

CompositeScale composite_scale(double f, double t, const RiskConfig& cfg) {
  const double h = f > t ? 1.0 : 0.0;
  return {(1.0 - cfg.gamma) * h / cfg.alpha + cfg.gamma, (1.0 - cfg.gamma) * (1.0 - h / cfg.alpha)};
}

CompositeGrads composite_grads(double f, std::span<const double> grad_f, double t,
                               const RiskConfig& cfg) {
  const auto s = composite_scale(f, t, cfg);
  CompositeGrads out{std::vector<double>(grad_f.size()), s.grad_t};
  for (std::size_t j = 0; j < grad_f.size(); ++j) out.grad_theta[j] = s.theta_scale * grad_f[j];
  return out;
}

Objective global_risk_objective(std::span<const double> losses, std::span<const double> probs,
                                const RiskConfig& cfg) {
  cfg.validate();
  const auto cv = cvar_with_threshold(losses, probs, cfg.alpha);
  return {(1.0 - cfg.gamma) * cv.value + cfg.gamma * weighted_mean(losses, probs), cv.t_star};
}

double max_loss_limit_check(std::span<const double> losses, std::span<const double> probs,
                            const RiskConfig& cfg) {
  cfg.validate();
  validate_distribution(losses, probs);
  double min_positive = std::numeric_limits<double>::infinity();
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) {
      min_positive = std::min(min_positive, probs[i]);
      worst = std::max(worst, losses[i]);
    }
  }
  if (cfg.alpha > min_positive) {
    throw InvalidArgument("max-loss limit needs alpha <= smallest positive probability");
  }
  return (1.0 - cfg.gamma) * worst + cfg.gamma * weighted_mean(losses, probs);
}

}  // namespace fedcvar::risk
