#include <doctest.h>

#include "oracles.hpp"
#include "stbp/simulate.hpp"
#include "stbp/stats.hpp"

using namespace stbp;

namespace {

// independently accumulated dense statistics from the one-hot feature map
void dense_stats(const EventPanel& panel, Matrix& G, Matrix& a) {
  const ModelSpec& spec = panel.spec;
  const Index F = spec.feature_count();
  G = Matrix::Zero(F, F);
  a = Matrix::Zero(F, static_cast<Index>(spec.K) * spec.M);
  for (int t = 1; t <= panel.N; ++t) {
    Vector u = Vector::Zero(F);
    u[0] = 1.0;
    for (int l = 0; l < spec.K; ++l)
      for (int s = 1; s <= spec.d; ++s)
        u[feature_index(spec, l, s, panel.omega(panel.row_of_time(t) - s, l))] = 1.0;
    G += u * u.transpose();
    for (int k = 0; k < spec.K; ++k) {
      const int p = panel.omega(panel.row_of_time(t), k);
      if (p > 0) a.col(static_cast<Index>(k) * spec.M + (p - 1)) += u;
    }
  }
  G /= panel.N;
  a /= panel.N;
}

EventPanel random_panel(oracle::Rng& rng, const ModelSpec& spec, int N) {
  IntMatrix omega(N + spec.d, spec.K);
  for (Index r = 0; r < omega.rows(); ++r)
    for (Index c = 0; c < omega.cols(); ++c) omega(r, c) = rng.uniform_int(0, spec.M);
  return EventPanel(spec, std::move(omega));
}

}  // namespace

TEST_CASE("sufficient statistics match a dense one-hot accumulation") {
  oracle::Rng rng(404);
  for (int trial = 0; trial < 10; ++trial) {
    ModelSpec spec(1 + trial % 3, 1 + trial % 2, trial % 3);
    EventPanel panel = random_panel(rng, spec, 60);
    SuffStats stats = accumulate(panel);
    Matrix G, a;
    dense_stats(panel, G, a);
    CHECK((stats.gram - G).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((stats.moments - a).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("the LS objective equals the dense quadratic form") {
  oracle::Rng rng(405);
  ModelSpec spec(2, 2, 1);
  EventPanel panel = random_panel(rng, spec, 80);
  SuffStats stats = accumulate(panel);
  Matrix A = stats.expand_full();
  Vector a = stats.moments_flat();
  for (int trial = 0; trial < 20; ++trial) {
    Vector beta(spec.param_count());
    for (Index i = 0; i < beta.size(); ++i) beta[i] = rng.uniform(-0.3, 0.3);
    ValueGradient vg = ls_objective(beta, stats);
    const double dense = 0.5 * beta.dot(A * beta) - a.dot(beta) + stats.sq_norm_avg;
    CHECK(vg.value == doctest::Approx(dense).epsilon(1e-10));
    CHECK((vg.gradient - (A * beta - a)).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("the LS objective is half the mean squared one-hot residual") {
  oracle::Rng rng(406);
  ModelSpec spec(2, 2, 1);
  EventPanel panel = random_panel(rng, spec, 50);
  SuffStats stats = accumulate(panel);
  Vector beta(spec.param_count());
  for (Index i = 0; i < beta.size(); ++i) beta[i] = rng.uniform(0.0, 0.1);
  double direct = 0.0;
  ParamVector pv(spec, beta);
  for (int t = 1; t <= panel.N; ++t) {
    IntMatrix window(spec.d, spec.K);
    for (int s = 1; s <= spec.d; ++s)
      window.row(s - 1) = panel.omega.row(panel.row_of_time(t) - s);
    StateEncoding enc = encode_state(panel.omega.row(panel.row_of_time(t)).transpose(), spec.M);
    for (int k = 0; k < spec.K; ++k)
      for (int p = 1; p <= spec.M; ++p) {
        const double z = oracle::linear_index_direct(spec, beta, window, k, p);
        const double r = enc.bar_omega[static_cast<Index>(k) * spec.M + p - 1] - z;
        direct += r * r;
      }
  }
  direct /= 2.0 * panel.N;
  CHECK(ls_objective(beta, stats).value == doctest::Approx(direct).epsilon(1e-9));
}

TEST_CASE("likelihood gradients match central finite differences") {
  oracle::Rng rng(407);
  ModelSpec spec(2, 2, 1);
  EventPanel panel = random_panel(rng, spec, 40);
  const double rho = 1e-3;
  for (int trial = 0; trial < 10; ++trial) {
    Vector beta(spec.param_count());
    for (Index i = 0; i < beta.size(); ++i) beta[i] = rng.uniform(0.02, 0.08);
    ValueGradient ml = ml_objective(beta, panel, rho);
    Vector fd = oracle::central_difference(
        [&](const Vector& b) { return ml_objective(b, panel, rho).value; }, beta, 1e-6);
    CHECK((ml.gradient - fd).lpNorm<Eigen::Infinity>() /
              (1.0 + fd.lpNorm<Eigen::Infinity>()) < 1e-6);

    Vector beta2(spec.param_count());
    for (Index i = 0; i < beta2.size(); ++i) beta2[i] = rng.uniform(-0.6, 0.6);
    ValueGradient lg = ml_logistic_objective(beta2, panel);
    Vector fd2 = oracle::central_difference(
        [&](const Vector& b) { return ml_logistic_objective(b, panel).value; }, beta2, 1e-6);
    CHECK((lg.gradient - fd2).lpNorm<Eigen::Infinity>() /
              (1.0 + fd2.lpNorm<Eigen::Infinity>()) < 1e-6);
  }
}

TEST_CASE("the identity-link empirical field is the LS gradient") {
  oracle::Rng rng(408);
  ModelSpec spec(2, 1, 1);
  EventPanel panel = random_panel(rng, spec, 60);
  SuffStats stats = accumulate(panel);
  Vector beta(spec.param_count());
  for (Index i = 0; i < beta.size(); ++i) beta[i] = rng.uniform(0.0, 0.2);
  Vector field = empirical_field(beta, panel, Link::Identity);
  CHECK((field - ls_objective(beta, stats).gradient).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("the logistic empirical field is the logistic likelihood gradient") {
  oracle::Rng rng(409);
  ModelSpec spec(2, 2, 1, Link::LogisticMultiState);
  EventPanel panel = random_panel(rng, spec, 40);
  Vector beta(spec.param_count());
  for (Index i = 0; i < beta.size(); ++i) beta[i] = rng.uniform(-0.5, 0.5);
  Vector field = empirical_field(beta, panel, Link::LogisticMultiState);
  CHECK((field - ml_logistic_objective(beta, panel).gradient).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("ML objective rejects parameters outside the strengthened polytope") {
  ModelSpec spec(1, 1, 0);
  IntMatrix omega(3, 1);
  omega << 1, 0, 1;
  EventPanel panel(spec, omega);
  Vector beta(1);
  beta << 1e-6;
  CHECK_THROWS_AS(ml_objective(beta, panel, 1e-3), std::domain_error);
}

TEST_CASE("the full Gram expansion is block-diagonal copies of the shared Gram") {
  oracle::Rng rng(410);
  ModelSpec spec(2, 1, 1);
  EventPanel panel = random_panel(rng, spec, 30);
  SuffStats stats = accumulate(panel);
  Matrix A = stats.expand_full();
  const Index B = spec.location_block_size();
  for (int k = 0; k < spec.K; ++k)
    for (int k2 = 0; k2 < spec.K; ++k2) {
      Matrix block = A.block(k * B, k2 * B, B, B);
      if (k != k2) CHECK(block.lpNorm<Eigen::Infinity>() == 0.0);
    }
  // quadratic forms agree with the shared-Gram slices
  Vector x(spec.param_count());
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  double via_blocks = 0.0;
  for (int k = 0; k < spec.K; ++k) {
    Eigen::Map<const Vector, 0, Eigen::InnerStride<>> slice(x.data() + k * B,
                                                            spec.feature_count(),
                                                            Eigen::InnerStride<>(spec.M));
    via_blocks += slice.dot(stats.gram * slice);
  }
  CHECK(x.dot(A * x) == doctest::Approx(via_blocks).epsilon(1e-10));
}
