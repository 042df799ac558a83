#pragma once

#include "stbp/constraints.hpp"
#include "stbp/stats.hpp"

namespace stbp {

/// Largest theta with g'Ag >= theta * |g|_p^2 for all g. p in {1,2,inf}
/// (inf encoded as p=0). p=2 is the smallest eigenvalue; p=inf solves one
/// box-QP per coordinate; p=1 returns a certified lower bound obtained from
/// a feasible point of the diagonal-majorization relaxation of A^{-1}
/// (conservative, never above the exact value).
double theta_p(const Matrix& A, int p);

struct DeviationBound {
  double epsilon = 0.0;
  double Theta = 1.0;
  Index kappa = 0;
  Index N = 0;
  double delta_inf = 0.0;  // Theta * (sqrt(ln(2 kappa/eps)/(2N)) + ln(2 kappa/eps)/(3N))
};

DeviationBound deviation_bound(Index N, Index kappa, double epsilon, double Theta = 1.0);

struct RiskBound {
  DeviationBound deviation;
  double theta_p_value = 0.0;
  double theta1_lower = 0.0;
  int p = 0;  // 0 encodes the sup norm
  double value = 0.0;
};

RiskBound risk_bound(const Matrix& A, Index N, Index kappa, double epsilon, int p,
                     double Theta = 1.0);

struct PsiPair {
  double lower = 0.0;
  double upper = 1.0;
};

/// Two-sided band for a Bernoulli mean around the empirical rate nu,
/// from the self-normalized martingale inequality; y > 1.
PsiPair psi_bounds(double nu, Index N, double y);

/// Simultaneous coverage of the kappa psi bands: 1 - 2 kappa e (y[ln((y-1)N)+2]+2) e^{-y}.
double coverage_level(double y, Index kappa, Index N);

/// Smallest y on the increasing branch with coverage_level(y) >= target.
double coverage_level_inverse(double target, Index kappa, Index N);

struct ConfintOptions {
  double y = 0.0;          // band parameter; <= 1 means derive from target_coverage
  double target_coverage = 0.9;
  double kkt_tol = 1e-7;
  int max_iter = 200000;
  int threads = 1;
};

struct ConfintResult {
  double lower = 0.0;
  double upper = 0.0;
  bool infeasible = false;
  double y = 0.0;
  double coverage = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  std::vector<Index> zero_rate_coords;  // coordinates whose empirical rate was 0
};

/// Confidence interval for e'beta: min/max of e'x over the feasible set
/// intersected with the psi band around the empirical moments. Each touched
/// location block is a small linear program (the polytope's min/max envelope
/// rows are lifted with auxiliary variables) solved exactly by a dense
/// two-phase simplex.
ConfintResult confint_linear(const Vector& e, const SuffStats& stats, const FeasibleSet& set,
                             const ConfintOptions& options = {});

}  // namespace stbp
