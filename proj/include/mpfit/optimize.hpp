#pragma once

#include <cstdint>
#include <functional>

#include "mpfit/common.hpp"

namespace mpfit {

/// Scalar objective with gradient written into *grad when non-null.
using ObjectiveFn = std::function<double(const Vec& x, Vec* grad)>;

struct AdamConfig {
  double learning_rate = 0.001;
  int epochs = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct LbfgsConfig {
  int max_iters = 2000;
  int memory = 10;
  double gradient_tolerance = 1e-8;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_line_search_steps = 25;
};

struct OptimizerConfig {
  AdamConfig adam;
  LbfgsConfig lbfgs;
  int restarts = 32;
  std::uint64_t base_seed = 0;

  void validate() const;
};

enum class OptStatus { kConverged, kMaxIters, kLineSearchFailed };

struct OptResult {
  Vec x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  OptStatus status = OptStatus::kMaxIters;
};

/// Full-gradient Adam for `epochs` steps. Deterministic given (x0, cfg).
/// Throws NumericalError when the objective or gradient goes non-finite.
OptResult adam(const ObjectiveFn& objective, const Vec& x0,
               const AdamConfig& cfg);

/// L-BFGS with two-loop recursion and a strong-Wolfe line search. Never
/// returns a value above the starting one; on line-search failure the best
/// iterate is returned with the status flag set.
OptResult lbfgs(const ObjectiveFn& objective, const Vec& x0,
                const LbfgsConfig& cfg);

/// Projected quasi-Newton for box constraints: L-BFGS directions restricted
/// to the free variables with a backtracking search along the projection arc.
OptResult lbfgs_box(const ObjectiveFn& objective, const Vec& x0,
                    const Box& box, const LbfgsConfig& cfg);

}  // namespace mpfit
