#pragma once

// CVaR machinery over finite distributions and the per-user composite
// objective G(theta, t) = (1 - gamma) * (t + (f - t)_+ / alpha) + gamma * f.

#include <cstddef>
#include <span>
#include <vector>

namespace fedcvar::risk {

struct RiskConfig {
  double alpha = 1.0;  // CVaR level, (0, 1]
  double gamma = 1.0;  // weight of the risk-neutral mean, [0, 1]

  /// Throws InvalidArgument outside the domain.
  void validate() const;
};

/// Throws InvalidArgument unless probs is a probability vector matching
/// values in length (sum within 1e-12 of one).
void validate_distribution(std::span<const double> values, std::span<const double> probs);

/// t + (1/alpha) * sum_i probs_i * (values_i - t)_+
double cvar_objective(std::span<const double> values, std::span<const double> probs, double alpha,
                      double t);

struct CvarResult {
  double value;
  double t_star;  // smallest minimizer of cvar_objective over t
};

/// Exact CVaR: mean of the upper-alpha tail, boundary atom weighted
/// fractionally.
CvarResult cvar_with_threshold(std::span<const double> values, std::span<const double> probs,
                               double alpha);
double cvar_discrete(std::span<const double> values, std::span<const double> probs, double alpha);

/// Minimum of cvar_objective over the grid t_lo + k * step, k = 0, 1, ...
/// while <= t_hi. The profile is convex in t, so the grid minimum is located
/// by bisection on forward differences.
double cvar_grid_oracle(std::span<const double> values, std::span<const double> probs, double alpha,
                        double t_lo, double t_hi, double step);

/// Same minimum by visiting every grid point; for coarse grids.
double cvar_grid_scan(std::span<const double> values, std::span<const double> probs, double alpha,
                      double t_lo, double t_hi, double step);

double composite_loss(double f, double t, const RiskConfig& cfg);

/// Gradient of composite_loss as a multiplier on grad_f plus d/dt.
/// At the kink f == t the inactive branch is used.
struct CompositeScale {
  double theta_scale;
  double grad_t;
};
CompositeScale composite_scale(double f, double t, const RiskConfig& cfg);

struct CompositeGrads {
  std::vector<double> grad_theta;
  double grad_t;
};
CompositeGrads composite_grads(double f, std::span<const double> grad_f, double t,
                               const RiskConfig& cfg);

struct Objective {
  double value;
  double t_star;
};

/// (1 - gamma) * CVaR_alpha[f_I] + gamma * E[f_I], I ~ probs.
Objective global_risk_objective(std::span<const double> losses, std::span<const double> probs,
                                const RiskConfig& cfg);

/// Weighted user-robust loss (1 - gamma) * max f + gamma * E[f], the value
/// the global objective takes once alpha <= the smallest positive
/// probability. The max runs over users with positive probability.
double max_loss_limit_check(std::span<const double> losses, std::span<const double> probs,
                            const RiskConfig& cfg);

}  // namespace fedcvar::risk
