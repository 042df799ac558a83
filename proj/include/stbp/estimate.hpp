#pragma once

#include "stbp/constraints.hpp"
#include "stbp/stats.hpp"

namespace stbp {

enum class StepRule { BacktrackingArmijo, FixedLipschitz };

struct SolveOptions {
  int max_iter = 50000;       // per location block
  double grad_tol = 0.0;      // 0 -> 1e-7 * (1 + |a|_inf)
  StepRule step_rule = StepRule::FixedLipschitz;
  bool restart = true;        // adaptive restart for the accelerated method
  double rho = 1e-4;          // ML polytope strengthening
  int threads = 0;            // 0 -> hardware concurrency
};

struct EstimateResult {
  ParamVector beta_hat;
  std::vector<double> objective_trace;  // joint objective across accepted iterations
  double residual = 0.0;                // achieved optimality residual (max over blocks)
  int iterations = 0;                   // max over blocks
  bool converged = true;
  std::vector<std::uint8_t> block_converged;
  std::vector<std::uint8_t> block_degenerate;  // location saw no events
};

/// Constrained LS: accelerated projected gradient per location block,
/// Lipschitz constant from the block Gram.
EstimateResult estimate_ls(const EventPanel& panel, const FeasibleSet& set,
                           const SolveOptions& options = {});
EstimateResult estimate_ls(const SuffStats& stats, const FeasibleSet& set,
                           const SolveOptions& options = {});

/// Constrained ML for the Identity link on the rho-strengthened polytope;
/// projected gradient with backtracking, warm-started from the LS solution.
EstimateResult estimate_ml(const EventPanel& panel, const FeasibleSet& set_with_rho,
                           const SolveOptions& options = {});

/// VI estimation by projected extragradient for nonlinear links; Identity
/// delegates to estimate_ls.
EstimateResult estimate_vi(const EventPanel& panel, Link link, const FeasibleSet& set,
                           const SolveOptions& options = {});

/// Logistic-link ML (convex, smooth everywhere; no rho needed).
EstimateResult estimate_ml_logistic(const EventPanel& panel, const FeasibleSet& set,
                                    const SolveOptions& options = {});

}  // namespace stbp
