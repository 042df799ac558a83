#include "stbp/simulate.hpp"

#include <cmath>

#include "stbp/constraints.hpp"

namespace stbp {

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t mix_counter(std::uint64_t seed, std::uint64_t t, std::uint64_t k) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (t * 0xd1342543de82ef95ULL));
  h = splitmix64(h ^ (k * 0xaf251af3b0f025b5ULL));
  return h;
}

double uniform01(std::uint64_t state) {
  return static_cast<double>(state >> 11) * 0x1.0p-53;
}

EventPanel simulate(const ModelSpec& spec, const ParamVector& beta, const SimConfig& config) {
  if (config.N < 1) throw std::invalid_argument("simulate: N must be >= 1");
  if (beta.spec.param_count() != spec.param_count())
    throw std::invalid_argument("simulate: beta does not match spec");
  if (spec.link == Link::Identity) {
    FeasibleSet basic(spec, {BasicPolytope{0.0}});
    FeasibilityReport rep = check_feasible(basic, beta.values, 1e-8);
    if (!rep.feasible)
      throw std::domain_error("simulate: beta infeasible for the basic polytope, violation " +
                              std::to_string(rep.worst));
  }

  IntMatrix omega = IntMatrix::Zero(config.N + spec.d, spec.K);
  if (config.initial_window.size() > 0) {
    if (config.initial_window.rows() != spec.d || config.initial_window.cols() != spec.K)
      throw std::invalid_argument("simulate: initial window must be d x K");
    omega.topRows(spec.d) = config.initial_window;
  }

  std::vector<Index> active;
  Vector z;
  IntMatrix window(spec.d, spec.K);
  for (int t = 1; t <= config.N; ++t) {
    const int r = t + spec.d - 1;
    for (int s = 1; s <= spec.d; ++s) window.row(s - 1) = omega.row(r - s);
    active_features(spec, window, active);
    linear_index(spec, beta.values, active, z);
    LinkEvalResult probs = link_eval(spec, z);
    for (int k = 0; k < spec.K; ++k) {
      double total = 0.0;
      for (int p = 0; p < spec.M; ++p) total += probs.probs[k * spec.M + p];
      if (total < -1e-9 || total > 1.0 + 1e-9 ||
          probs.probs.segment(k * spec.M, spec.M).minCoeff() < -1e-9)
        throw std::runtime_error("simulate: probability vector outside the simplex at t=" +
                                 std::to_string(t) + ", k=" + std::to_string(k));
      const double u = uniform01(mix_counter(config.seed, static_cast<std::uint64_t>(t),
                                             static_cast<std::uint64_t>(k)));
      // inverse CDF over categories 1..M, ground state last
      double cum = 0.0;
      int draw = 0;
      for (int p = 1; p <= spec.M; ++p) {
        cum += probs.probs[k * spec.M + (p - 1)];
        if (u < cum) {
          draw = p;
          break;
        }
      }
      omega(r, k) = draw;
    }
  }
  return EventPanel(spec, std::move(omega));
}

Matrix frequency_report(const EventPanel& panel) {
  const ModelSpec& spec = panel.spec;
  Matrix freq = Matrix::Zero(spec.K, spec.M);
  for (int t = 1; t <= panel.N; ++t) {
    const int r = panel.row_of_time(t);
    for (int k = 0; k < spec.K; ++k) {
      const int p = panel.omega(r, k);
      if (p > 0) freq(k, p - 1) += 1.0;
    }
  }
  return freq / panel.N;
}

}  // namespace stbp
