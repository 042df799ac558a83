#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stbp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

enum class Link { Identity, SigmoidSingleState, LogisticMultiState };

std::string link_name(Link link);
Link link_from_name(const std::string& name);

/// Dimensions of the process. K locations, M event categories (state 0 is
/// the ground "no event" state), memory depth d in time steps.
struct ModelSpec {
  int K = 1;
  int M = 1;
  int d = 0;
  Link link = Link::Identity;

  ModelSpec() = default;
  ModelSpec(int K_, int M_, int d_, Link link_ = Link::Identity);

  /// Slots per location: M baselines plus d*K*(M+1)*M interactions.
  Index location_block_size() const {
    return static_cast<Index>(M) + static_cast<Index>(d) * K * (M + 1) * M;
  }
  /// Total parameter count kappa = K*M + d*K^2*M*(M+1).
  Index param_count() const { return static_cast<Index>(K) * location_block_size(); }
  /// Reduced window-feature dimension: intercept plus one slot per (l,s,q).
  Index feature_count() const { return 1 + static_cast<Index>(d) * K * (M + 1); }
  /// Nonzeros per feature row: intercept plus one per (l,s).
  Index active_feature_count() const { return 1 + static_cast<Index>(d) * K; }

  bool operator==(const ModelSpec& o) const {
    return K == o.K && M == o.M && d == o.d && link == o.link;
  }
};

// Canonical flat layout, location-major. Within location k (0-based):
// first the M baselines beta_k(p), p=1..M, then interactions
// beta^s_{kl}(p,q) ordered by (l, s, q) with p fastest via stride M.
// The sub-vector of the (k,p) estimation block is the strided slice
// beta[k*B + (p-1) + j*M], j = 0..F-1, j being the reduced feature index.

inline Index feature_index(const ModelSpec& spec, int l, int s, int q) {
  return 1 + (static_cast<Index>(l) * spec.d + (s - 1)) * (spec.M + 1) + q;
}

inline Index param_index_baseline(const ModelSpec& spec, int k, int p) {
  return static_cast<Index>(k) * spec.location_block_size() + (p - 1);
}

inline Index param_index_interaction(const ModelSpec& spec, int k, int l, int s, int q, int p) {
  return static_cast<Index>(k) * spec.location_block_size() + (p - 1) +
         feature_index(spec, l, s, q) * spec.M;
}

/// Range-checked versions of the flat-index maps.
Index param_index(const ModelSpec& spec, int k, int p);
Index param_index(const ModelSpec& spec, int k, int l, int s, int q, int p);

/// Semantic coordinate recovered from a flat index.
struct ParamCoord {
  bool baseline = false;
  int k = 0, p = 0, l = 0, s = 0, q = 0;
};
ParamCoord param_coord(const ModelSpec& spec, Index flat);

/// Flat parameter vector tied to a spec.
struct ParamVector {
  ModelSpec spec;
  Vector values;

  ParamVector() = default;
  explicit ParamVector(const ModelSpec& s) : spec(s), values(Vector::Zero(s.param_count())) {}
  ParamVector(const ModelSpec& s, Vector v);
};

/// Observed array omega over times -d+1..N (rows) and K locations (cols),
/// entries in {0..M}. Row r holds time t = r - d + 1; the first d rows are
/// the conditioning initial segment.
struct EventPanel {
  ModelSpec spec;
  IntMatrix omega;  // (N + d) x K
  int N = 0;

  EventPanel() = default;
  EventPanel(const ModelSpec& s, IntMatrix om);

  int row_of_time(int t) const { return t + spec.d - 1; }
};

/// Per-time-row block one-hot encoding: K blocks of length M, block k zero
/// when the location is in the ground state.
struct StateEncoding {
  Vector bar_omega;  // K*M
};

StateEncoding encode_state(const Eigen::VectorXi& row, int M);
Eigen::VectorXi decode_state(const StateEncoding& enc, int M);

/// Reduced feature indices active for the window ending just before some
/// time t: j=0 (intercept) plus one slot per (l, s) at the observed q.
/// `window` has d rows (row s-1 holds the states s steps back) and K cols.
void active_features(const ModelSpec& spec, const IntMatrix& window, std::vector<Index>& out);

/// Linear index z_{kp} for all (k,p) given the active features.
/// z has K*M entries ordered k-major, p fastest.
void linear_index(const ModelSpec& spec, const Vector& beta, const std::vector<Index>& active,
                  Vector& z);

struct LinkEvalResult {
  Vector probs;   // K*M, entry (k,p)
  Vector ground;  // K
};

/// Componentwise link applied to the linear index z (K*M entries).
LinkEvalResult link_eval(const ModelSpec& spec, const Vector& z);

struct ConditionalProbs {
  Matrix probs;   // K x M
  Vector ground;  // K
};

/// Conditional event probabilities given the last d rows before t.
ConditionalProbs conditional_probs(const ParamVector& beta, const IntMatrix& window,
                                   double tol = 1e-9);

}  // namespace stbp
