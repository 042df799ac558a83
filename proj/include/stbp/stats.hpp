#pragma once

#include "stbp/model.hpp"

namespace stbp {

/// Sufficient statistics of a panel. The reduced window-feature row is the
/// same for every (k,p), so a single Gram block G (F x F) serves all KM
/// sub-problems; the full kappa x kappa matrix A is block-diagonal with KM
/// copies of G. Moments a_{k,p} are the columns of `moments` (F x KM,
/// column k*M + p - 1).
struct SuffStats {
  ModelSpec spec;
  Matrix gram;         // F x F, symmetric PSD, entries in [0,1]
  Matrix moments;      // F x (K*M)
  double sq_norm_avg = 0.0;  // (1/2N) sum_t |bar_omega_t|^2
  int N = 0;

  Index moment_col(int k, int p) const { return static_cast<Index>(k) * spec.M + (p - 1); }

  /// a[omega^N] in the canonical flat layout.
  Vector moments_flat() const;
  /// Dense A[omega^N] (kappa x kappa); for tests and small instances only.
  Matrix expand_full() const;
};

/// Single pass over t = 1..N using the implicit sparse feature rows.
SuffStats accumulate(const EventPanel& panel);

struct ValueGradient {
  double value = 0.0;
  Vector gradient;
};

/// Psi_{omega^N}(beta) = (1/2)beta'A beta - a'beta + (1/2N) sum|bar_omega|^2
/// and its gradient A beta - a.
ValueGradient ls_objective(const Vector& beta, const SuffStats& stats);

/// Negative log-likelihood for the Identity link on the rho-strengthened
/// polytope, and its gradient. Throws std::domain_error naming the violating
/// (t,k) when some conditional probability leaves [rho, 1-rho].
ValueGradient ml_objective(const Vector& beta, const EventPanel& panel, double rho);

/// Logistic-link negative log-likelihood (ground score fixed to 0); smooth
/// on all of R^kappa.
ValueGradient ml_logistic_objective(const Vector& beta, const EventPanel& panel);

/// Empirical field F_{omega^N}(beta) = (1/N) sum_t eta [phi(eta'beta) -
/// bar_omega_t]. For the Identity link this equals the LS gradient.
Vector empirical_field(const Vector& beta, const EventPanel& panel, Link link);

/// Precomputed per-time active feature lists, shared by the likelihood and
/// field evaluations.
struct PanelFeatures {
  ModelSpec spec;
  int N = 0;
  std::vector<Index> active;  // N * (1 + dK), row-major
  Index stride = 0;

  const Index* row(int t1) const { return active.data() + static_cast<Index>(t1 - 1) * stride; }
};

PanelFeatures panel_features(const EventPanel& panel);

/// Per-location ML objective/gradient over the location block (size B),
/// given precomputed features. Used by the block solvers.
ValueGradient ml_objective_location(const Vector& block, const EventPanel& panel,
                                    const PanelFeatures& feats, int k, double rho);
ValueGradient ml_logistic_objective_location(const Vector& block, const EventPanel& panel,
                                             const PanelFeatures& feats, int k);
/// Per-location slice of the empirical field for a nonlinear link.
Vector empirical_field_location(const Vector& block, const EventPanel& panel,
                                const PanelFeatures& feats, int k, Link link);

}  // namespace stbp
