#include "stbp/stats.hpp"

#include <cmath>

namespace stbp {

namespace {
using StridedConst = Eigen::Map<const Vector, 0, Eigen::InnerStride<>>;
using Strided = Eigen::Map<Vector, 0, Eigen::InnerStride<>>;
}  // namespace

Vector SuffStats::moments_flat() const {
  const Index B = spec.location_block_size();
  Vector a = Vector::Zero(spec.param_count());
  for (int k = 0; k < spec.K; ++k)
    for (int p = 1; p <= spec.M; ++p) {
      Strided slice(a.data() + k * B + (p - 1), spec.feature_count(),
                    Eigen::InnerStride<>(spec.M));
      slice = moments.col(moment_col(k, p));
    }
  return a;
}

Matrix SuffStats::expand_full() const {
  const Index kappa = spec.param_count();
  const Index B = spec.location_block_size();
  const Index F = spec.feature_count();
  Matrix A = Matrix::Zero(kappa, kappa);
  for (int k = 0; k < spec.K; ++k)
    for (int p = 1; p <= spec.M; ++p)
      for (Index i = 0; i < F; ++i)
        for (Index j = 0; j < F; ++j)
          A(k * B + (p - 1) + i * spec.M, k * B + (p - 1) + j * spec.M) = gram(i, j);
  return A;
}

PanelFeatures panel_features(const EventPanel& panel) {
  const ModelSpec& spec = panel.spec;
  PanelFeatures feats;
  feats.spec = spec;
  feats.N = panel.N;
  feats.stride = spec.active_feature_count();
  feats.active.resize(static_cast<Index>(panel.N) * feats.stride);
  Index pos = 0;
  for (int t = 1; t <= panel.N; ++t) {
    feats.active[pos++] = 0;
    const int r = panel.row_of_time(t);
    for (int l = 0; l < spec.K; ++l)
      for (int s = 1; s <= spec.d; ++s)
        feats.active[pos++] = feature_index(spec, l, s, panel.omega(r - s, l));
  }
  return feats;
}

SuffStats accumulate(const EventPanel& panel) {
  const ModelSpec& spec = panel.spec;
  if (panel.N < 1) throw std::invalid_argument("accumulate: empty panel");
  const Index F = spec.feature_count();
  SuffStats stats;
  stats.spec = spec;
  stats.N = panel.N;
  stats.gram = Matrix::Zero(F, F);
  stats.moments = Matrix::Zero(F, static_cast<Index>(spec.K) * spec.M);
  PanelFeatures feats = panel_features(panel);
  double events = 0.0;
  for (int t = 1; t <= panel.N; ++t) {
    const Index* row = feats.row(t);
    for (Index i = 0; i < feats.stride; ++i)
      for (Index j = 0; j < feats.stride; ++j) stats.gram(row[i], row[j]) += 1.0;
    const int r = panel.row_of_time(t);
    for (int k = 0; k < spec.K; ++k) {
      const int p = panel.omega(r, k);
      if (p == 0) continue;
      events += 1.0;
      auto col = stats.moments.col(stats.moment_col(k, p));
      for (Index i = 0; i < feats.stride; ++i) col[row[i]] += 1.0;
    }
  }
  stats.gram /= panel.N;
  stats.moments /= panel.N;
  stats.sq_norm_avg = events / (2.0 * panel.N);
  return stats;
}

ValueGradient ls_objective(const Vector& beta, const SuffStats& stats) {
  const ModelSpec& spec = stats.spec;
  if (beta.size() != spec.param_count())
    throw std::invalid_argument("ls_objective: beta has wrong size");
  const Index B = spec.location_block_size();
  const Index F = spec.feature_count();
  ValueGradient out;
  out.value = stats.sq_norm_avg;
  out.gradient.resize(beta.size());
  Vector gx(F);
  for (int k = 0; k < spec.K; ++k)
    for (int p = 1; p <= spec.M; ++p) {
      StridedConst x(beta.data() + k * B + (p - 1), F, Eigen::InnerStride<>(spec.M));
      gx.noalias() = stats.gram * x;
      const auto a = stats.moments.col(stats.moment_col(k, p));
      out.value += 0.5 * x.dot(gx) - a.dot(x);
      Strided g(out.gradient.data() + k * B + (p - 1), F, Eigen::InnerStride<>(spec.M));
      g = gx - a;
    }
  return out;
}

namespace {

// Shared scaffolding for the per-location likelihood loops.
template <typename Body>
void location_pass(const EventPanel& panel, const PanelFeatures& feats, Body&& body) {
  for (int t = 1; t <= panel.N; ++t) body(t, feats.row(t));
}

}  // namespace

ValueGradient ml_objective_location(const Vector& block, const EventPanel& panel,
                                    const PanelFeatures& feats, int k, double rho) {
  const ModelSpec& spec = panel.spec;
  const int M = spec.M;
  const Index nact = feats.stride;
  ValueGradient out;
  out.gradient = Vector::Zero(block.size());
  Vector z(M);
  const double slack = std::min(1e-9, 0.5 * std::max(rho, 1e-300));
  location_pass(panel, feats, [&](int t, const Index* row) {
    double sumz = 0.0;
    for (int p = 0; p < M; ++p) {
      double acc = 0.0;
      for (Index i = 0; i < nact; ++i) acc += block[p + row[i] * M];
      z[p] = acc;
      sumz += acc;
      if (acc < rho - slack)
        throw std::domain_error("ml_objective: probability below rho at t=" + std::to_string(t) +
                                ", k=" + std::to_string(k) + ", p=" + std::to_string(p + 1));
    }
    if (sumz > 1.0 - rho + slack)
      throw std::domain_error("ml_objective: probabilities above 1-rho at t=" +
                              std::to_string(t) + ", k=" + std::to_string(k));
    const int obs = panel.omega(panel.row_of_time(t), k);
    if (obs > 0) {
      out.value -= std::log(z[obs - 1]);
      const double g = -1.0 / z[obs - 1];
      for (Index i = 0; i < nact; ++i) out.gradient[(obs - 1) + row[i] * M] += g;
    } else {
      out.value -= std::log(1.0 - sumz);
      const double g = 1.0 / (1.0 - sumz);
      for (int p = 0; p < M; ++p)
        for (Index i = 0; i < nact; ++i) out.gradient[p + row[i] * M] += g;
    }
  });
  out.value /= panel.N;
  out.gradient /= panel.N;
  return out;
}

ValueGradient ml_logistic_objective_location(const Vector& block, const EventPanel& panel,
                                             const PanelFeatures& feats, int k) {
  const ModelSpec& spec = panel.spec;
  const int M = spec.M;
  const Index nact = feats.stride;
  ValueGradient out;
  out.gradient = Vector::Zero(block.size());
  Vector z(M), phi(M);
  location_pass(panel, feats, [&](int t, const Index* row) {
    double zmax = 0.0;
    for (int p = 0; p < M; ++p) {
      double acc = 0.0;
      for (Index i = 0; i < nact; ++i) acc += block[p + row[i] * M];
      z[p] = acc;
      zmax = std::max(zmax, acc);
    }
    double denom = std::exp(-zmax);
    for (int p = 0; p < M; ++p) denom += std::exp(z[p] - zmax);
    const double lse = zmax + std::log(denom);  // log(1 + sum exp z)
    for (int p = 0; p < M; ++p) phi[p] = std::exp(z[p] - lse);
    const int obs = panel.omega(panel.row_of_time(t), k);
    out.value += lse - (obs > 0 ? z[obs - 1] : 0.0);
    for (int p = 0; p < M; ++p) {
      const double g = phi[p] - (obs == p + 1 ? 1.0 : 0.0);
      for (Index i = 0; i < nact; ++i) out.gradient[p + row[i] * M] += g;
    }
  });
  out.value /= panel.N;
  out.gradient /= panel.N;
  return out;
}

Vector empirical_field_location(const Vector& block, const EventPanel& panel,
                                const PanelFeatures& feats, int k, Link link) {
  const ModelSpec& spec = panel.spec;
  const int M = spec.M;
  const Index nact = feats.stride;
  Vector field = Vector::Zero(block.size());
  Vector z(M), phi(M);
  location_pass(panel, feats, [&](int t, const Index* row) {
    double zmax = 0.0;
    for (int p = 0; p < M; ++p) {
      double acc = 0.0;
      for (Index i = 0; i < nact; ++i) acc += block[p + row[i] * M];
      z[p] = acc;
      zmax = std::max(zmax, acc);
    }
    switch (link) {
      case Link::Identity:
        phi = z;
        break;
      case Link::SigmoidSingleState:
        phi[0] = 1.0 / (1.0 + std::exp(-z[0]));
        break;
      case Link::LogisticMultiState: {
        double denom = std::exp(-zmax);
        for (int p = 0; p < M; ++p) denom += std::exp(z[p] - zmax);
        for (int p = 0; p < M; ++p) phi[p] = std::exp(z[p] - zmax) / denom;
        break;
      }
    }
    const int obs = panel.omega(panel.row_of_time(t), k);
    for (int p = 0; p < M; ++p) {
      const double g = phi[p] - (obs == p + 1 ? 1.0 : 0.0);
      for (Index i = 0; i < nact; ++i) field[p + row[i] * M] += g;
    }
  });
  field /= panel.N;
  return field;
}

ValueGradient ml_objective(const Vector& beta, const EventPanel& panel, double rho) {
  const ModelSpec& spec = panel.spec;
  if (beta.size() != spec.param_count())
    throw std::invalid_argument("ml_objective: beta has wrong size");
  const Index B = spec.location_block_size();
  PanelFeatures feats = panel_features(panel);
  ValueGradient out;
  out.gradient.resize(beta.size());
  for (int k = 0; k < spec.K; ++k) {
    ValueGradient loc = ml_objective_location(beta.segment(k * B, B), panel, feats, k, rho);
    out.value += loc.value;
    out.gradient.segment(k * B, B) = loc.gradient;
  }
  return out;
}

ValueGradient ml_logistic_objective(const Vector& beta, const EventPanel& panel) {
  const ModelSpec& spec = panel.spec;
  if (beta.size() != spec.param_count())
    throw std::invalid_argument("ml_logistic_objective: beta has wrong size");
  const Index B = spec.location_block_size();
  PanelFeatures feats = panel_features(panel);
  ValueGradient out;
  out.gradient.resize(beta.size());
  for (int k = 0; k < spec.K; ++k) {
    ValueGradient loc = ml_logistic_objective_location(beta.segment(k * B, B), panel, feats, k);
    out.value += loc.value;
    out.gradient.segment(k * B, B) = loc.gradient;
  }
  return out;
}

Vector empirical_field(const Vector& beta, const EventPanel& panel, Link link) {
  const ModelSpec& spec = panel.spec;
  if (beta.size() != spec.param_count())
    throw std::invalid_argument("empirical_field: beta has wrong size");
  if (link == Link::Identity) {
    SuffStats stats = accumulate(panel);
    return ls_objective(beta, stats).gradient;
  }
  const Index B = spec.location_block_size();
  PanelFeatures feats = panel_features(panel);
  Vector field(beta.size());
  for (int k = 0; k < spec.K; ++k)
    field.segment(k * B, B) = empirical_field_location(beta.segment(k * B, B), panel, feats, k, link);
  return field;
}

}  // namespace stbp
