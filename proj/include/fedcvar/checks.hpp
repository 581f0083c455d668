#pragma once

// Randomized self-checks behind the `check-grad` and `check-cvar` commands.

#include <cstddef>
#include <cstdint>

namespace fedcvar::checks {

struct GradCheckReport {
  std::size_t trials = 0;
  double max_rel_err = 0.0;  // over all trials, in (theta, t) jointly
  double tolerance = 1e-4;
  bool passed() const noexcept { return max_rel_err <= tolerance; }
};

/// Analytic composite-loss gradients in (theta, t) against central
/// differences on random small models and batches. Thresholds are drawn at
/// least 0.05 away from the loss so no instance sits on the hinge.
GradCheckReport check_composite_gradients(std::size_t trials, std::uint64_t seed);

struct CvarCheckReport {
  std::size_t trials = 0;
  double max_grid_err = 0.0;       // closed form vs grid oracle (step 1e-6)
  double max_mean_err = 0.0;       // alpha = 1 against the weighted mean
  double max_limit_err = 0.0;      // alpha <= min positive prob against the max
  double grid_tolerance = 1e-5;
  double exact_tolerance = 1e-12;
  bool passed() const noexcept {
    return max_grid_err <= grid_tolerance && max_mean_err <= exact_tolerance &&
           max_limit_err <= exact_tolerance;
  }
};

/// Random discrete instances (n <= 10, values in [-10, 10]).
CvarCheckReport check_cvar(std::size_t trials, std::uint64_t seed);

}  // namespace fedcvar::checks
