#include "stbp/model.hpp"

#include <cmath>

namespace stbp {

std::string link_name(Link link) {
  switch (link) {
    case Link::Identity: return "identity";
    case Link::SigmoidSingleState: return "sigmoid";
    case Link::LogisticMultiState: return "logistic";
  }
  return "identity";
}

Link link_from_name(const std::string& name) {
  if (name == "identity") return Link::Identity;
  if (name == "sigmoid") return Link::SigmoidSingleState;
  if (name == "logistic") return Link::LogisticMultiState;
  throw std::invalid_argument("unknown link function: " + name);
}

ModelSpec::ModelSpec(int K_, int M_, int d_, Link link_) : K(K_), M(M_), d(d_), link(link_) {
  if (K < 1) throw std::invalid_argument("ModelSpec: K must be >= 1");
  if (M < 1) throw std::invalid_argument("ModelSpec: M must be >= 1");
  if (d < 0) throw std::invalid_argument("ModelSpec: d must be >= 0");
  if (link == Link::SigmoidSingleState && M != 1)
    throw std::invalid_argument("ModelSpec: sigmoid link requires M = 1");
}

namespace {
void check_kp(const ModelSpec& spec, int k, int p) {
  if (k < 0 || k >= spec.K) throw std::out_of_range("param_index: location out of range");
  if (p < 1 || p > spec.M) throw std::out_of_range("param_index: category out of range");
}
}  // namespace

Index param_index(const ModelSpec& spec, int k, int p) {
  check_kp(spec, k, p);
  return param_index_baseline(spec, k, p);
}

Index param_index(const ModelSpec& spec, int k, int l, int s, int q, int p) {
  check_kp(spec, k, p);
  if (l < 0 || l >= spec.K) throw std::out_of_range("param_index: source location out of range");
  if (s < 1 || s > spec.d) throw std::out_of_range("param_index: lag out of range");
  if (q < 0 || q > spec.M) throw std::out_of_range("param_index: source state out of range");
  return param_index_interaction(spec, k, l, s, q, p);
}

ParamCoord param_coord(const ModelSpec& spec, Index flat) {
  if (flat < 0 || flat >= spec.param_count()) throw std::out_of_range("param_coord: out of range");
  const Index B = spec.location_block_size();
  ParamCoord c;
  c.k = static_cast<int>(flat / B);
  Index r = flat % B;
  if (r < spec.M) {
    c.baseline = true;
    c.p = static_cast<int>(r) + 1;
    return c;
  }
  r -= spec.M;
  c.p = static_cast<int>(r % spec.M) + 1;
  Index g = r / spec.M;  // (l*d + (s-1))*(M+1) + q
  c.q = static_cast<int>(g % (spec.M + 1));
  g /= (spec.M + 1);
  c.s = static_cast<int>(g % spec.d) + 1;
  c.l = static_cast<int>(g / spec.d);
  return c;
}

ParamVector::ParamVector(const ModelSpec& s, Vector v) : spec(s), values(std::move(v)) {
  if (values.size() != spec.param_count())
    throw std::invalid_argument("ParamVector: length does not match spec");
}

EventPanel::EventPanel(const ModelSpec& s, IntMatrix om) : spec(s), omega(std::move(om)) {
  N = static_cast<int>(omega.rows()) - spec.d;
  if (N < 1) throw std::invalid_argument("EventPanel: horizon must be positive");
  if (omega.cols() != spec.K) throw std::invalid_argument("EventPanel: wrong location count");
  if ((omega.array() < 0).any() || (omega.array() > spec.M).any())
    throw std::invalid_argument("EventPanel: entries must be in {0..M}");
}

StateEncoding encode_state(const Eigen::VectorXi& row, int M) {
  StateEncoding enc;
  enc.bar_omega = Vector::Zero(row.size() * M);
  for (Index k = 0; k < row.size(); ++k) {
    const int q = row[k];
    if (q < 0 || q > M) throw std::out_of_range("encode_state: entry out of range");
    if (q > 0) enc.bar_omega[k * M + q - 1] = 1.0;
  }
  return enc;
}

Eigen::VectorXi decode_state(const StateEncoding& enc, int M) {
  const Index K = enc.bar_omega.size() / M;
  Eigen::VectorXi row = Eigen::VectorXi::Zero(K);
  for (Index k = 0; k < K; ++k)
    for (int p = 1; p <= M; ++p)
      if (enc.bar_omega[k * M + p - 1] != 0.0) row[k] = p;
  return row;
}

void active_features(const ModelSpec& spec, const IntMatrix& window, std::vector<Index>& out) {
  out.clear();
  out.reserve(spec.active_feature_count());
  out.push_back(0);
  for (int l = 0; l < spec.K; ++l)
    for (int s = 1; s <= spec.d; ++s)
      out.push_back(feature_index(spec, l, s, window(s - 1, l)));
}

void linear_index(const ModelSpec& spec, const Vector& beta, const std::vector<Index>& active,
                  Vector& z) {
  const Index B = spec.location_block_size();
  const int M = spec.M;
  z.resize(static_cast<Index>(spec.K) * M);
  for (int k = 0; k < spec.K; ++k) {
    const Index base = static_cast<Index>(k) * B;
    for (int p = 0; p < M; ++p) {
      double acc = 0.0;
      for (Index j : active) acc += beta[base + p + j * M];
      z[static_cast<Index>(k) * M + p] = acc;
    }
  }
}

LinkEvalResult link_eval(const ModelSpec& spec, const Vector& z) {
  const int K = spec.K, M = spec.M;
  if (z.size() != static_cast<Index>(K) * M)
    throw std::invalid_argument("link_eval: z has wrong size");
  LinkEvalResult r;
  r.probs.resize(z.size());
  r.ground.resize(K);
  switch (spec.link) {
    case Link::Identity: {
      for (int k = 0; k < K; ++k) {
        double sum = 0.0;
        for (int p = 0; p < M; ++p) {
          const double v = z[k * M + p];
          if (v < 0.0 || v > 1.0)
            throw std::domain_error("link_eval: identity link requires z in [0,1]");
          r.probs[k * M + p] = v;
          sum += v;
        }
        r.ground[k] = 1.0 - sum;
      }
      break;
    }
    case Link::SigmoidSingleState: {
      for (int k = 0; k < K; ++k) {
        const double p1 = 1.0 / (1.0 + std::exp(-z[k]));
        r.probs[k] = p1;
        r.ground[k] = 1.0 - p1;
      }
      break;
    }
    case Link::LogisticMultiState: {
      // Ground-category affine score fixed to 0.
      for (int k = 0; k < K; ++k) {
        double zmax = 0.0;
        for (int p = 0; p < M; ++p) zmax = std::max(zmax, z[k * M + p]);
        double denom = std::exp(-zmax);
        for (int p = 0; p < M; ++p) denom += std::exp(z[k * M + p] - zmax);
        for (int p = 0; p < M; ++p)
          r.probs[k * M + p] = std::exp(z[k * M + p] - zmax) / denom;
        r.ground[k] = std::exp(-zmax) / denom;
      }
      break;
    }
  }
  return r;
}

ConditionalProbs conditional_probs(const ParamVector& beta, const IntMatrix& window, double tol) {
  const ModelSpec& spec = beta.spec;
  if (window.rows() != spec.d || window.cols() != spec.K)
    throw std::invalid_argument("conditional_probs: window must be d x K");
  if ((window.array() < 0).any() || (window.array() > spec.M).any())
    throw std::invalid_argument("conditional_probs: window entries must be in {0..M}");
  std::vector<Index> active;
  active_features(spec, window, active);
  Vector z;
  linear_index(spec, beta.values, active, z);

  ConditionalProbs out;
  out.probs.resize(spec.K, spec.M);
  out.ground.resize(spec.K);
  if (spec.link == Link::Identity) {
    for (int k = 0; k < spec.K; ++k) {
      double sum = 0.0;
      for (int p = 0; p < spec.M; ++p) {
        const double v = z[k * spec.M + p];
        if (v < -tol || v > 1.0 + tol)
          throw std::domain_error("conditional_probs: infeasible beta, probability outside [0,1]");
        out.probs(k, p) = v;
        sum += v;
      }
      if (sum > 1.0 + tol)
        throw std::domain_error("conditional_probs: infeasible beta, probabilities sum above 1");
      out.ground[k] = 1.0 - sum;
    }
  } else {
    LinkEvalResult lr = link_eval(spec, z);
    for (int k = 0; k < spec.K; ++k)
      for (int p = 0; p < spec.M; ++p) out.probs(k, p) = lr.probs[k * spec.M + p];
    out.ground = lr.ground;
  }
  return out;
}

}  // namespace stbp
