#include "stbp/estimate.hpp"

#include <cmath>

#include "stbp/parallel.hpp"

namespace stbp {

namespace {

using StridedConst = Eigen::Map<const Vector, 0, Eigen::InnerStride<>>;
using Strided = Eigen::Map<Vector, 0, Eigen::InnerStride<>>;

struct BlockOutcome {
  Vector x;
  std::vector<double> trace;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
};

// Location-block quadratic: sum_p (1/2) x_p' G x_p - a_p' x_p over the
// strided (k,p) slices.
struct QuadBlock {
  const Matrix& gram;
  Matrix acols;  // F x M, columns for this location
  int M;
  Index F;

  double value(const Vector& block) const {
    double v = 0.0;
    for (int p = 0; p < M; ++p) {
      StridedConst x(block.data() + p, F, Eigen::InnerStride<>(M));
      v += 0.5 * x.dot(gram * x) - acols.col(p).dot(x);
    }
    return v;
  }
  void gradient(const Vector& block, Vector& grad) const {
    grad.resize(block.size());
    for (int p = 0; p < M; ++p) {
      StridedConst x(block.data() + p, F, Eigen::InnerStride<>(M));
      Strided g(grad.data() + p, F, Eigen::InnerStride<>(M));
      g = gram * x - acols.col(p);
    }
  }
};

double default_grad_tol(const SuffStats& stats, const SolveOptions& options) {
  if (options.grad_tol > 0.0) return options.grad_tol;
  return 1e-7 * (1.0 + stats.moments.lpNorm<Eigen::Infinity>());
}

Vector moments_block(const SuffStats& stats, int k) {
  const ModelSpec& spec = stats.spec;
  Vector block(spec.location_block_size());
  for (int p = 0; p < spec.M; ++p) {
    Strided slice(block.data() + p, spec.feature_count(), Eigen::InnerStride<>(spec.M));
    slice = stats.moments.col(stats.moment_col(k, p + 1));
  }
  return block;
}

// FISTA with adaptive restart over one location block.
BlockOutcome solve_ls_block(const QuadBlock& quad, const FeasibleSet& set, int k,
                            const Vector& x0, double L, double grad_tol,
                            const SolveOptions& options) {
  BlockOutcome out;
  Vector x = project_location(set, k, x0);
  Vector y = x, grad(x.size()), xnew(x.size());
  double fx = quad.value(x);
  out.trace.push_back(fx);
  double t = 1.0;
  const double step = 1.0 / L;
  for (int it = 0; it < options.max_iter; ++it) {
    quad.gradient(y, grad);
    xnew = project_location(set, k, y - step * grad);
    double fnew = quad.value(xnew);
    if (options.restart && fnew > fx) {
      // restart momentum from the last accepted point
      y = x;
      t = 1.0;
      quad.gradient(y, grad);
      xnew = project_location(set, k, y - step * grad);
      fnew = quad.value(xnew);
    }
    const double tnew = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = xnew + ((t - 1.0) / tnew) * (xnew - x);
    const double move = (xnew - x).norm();
    x = xnew;
    fx = fnew;
    t = tnew;
    out.trace.push_back(fx);
    out.iterations = it + 1;
    if (move * L <= grad_tol || it % 20 == 19 || it == options.max_iter - 1) {
      quad.gradient(x, grad);
      Vector xr = project_location(set, k, x - step * grad);
      out.residual = (x - xr).norm() * L;
      if (out.residual <= grad_tol) {
        out.converged = true;
        break;
      }
    }
  }
  out.x = x;
  return out;
}

// Projected gradient with backtracking over one location block; objective
// evaluations may throw domain errors, treated as failed steps.
template <typename Objective>
BlockOutcome solve_pg_block(const Objective& objective, const FeasibleSet& set, int k,
                            const Vector& x0, double step0, double grad_tol,
                            const SolveOptions& options) {
  BlockOutcome out;
  Vector x = x0;
  Vector y = x0;                    // extrapolation point
  double theta = 1.0;               // momentum weight
  ValueGradient vg = objective(y);  // throws if x0 not strictly feasible
  double fx = vg.value;             // objective at the current iterate x
  out.trace.push_back(fx);
  double t = step0;
  Vector xnew(x.size());
  for (int it = 0; it < options.max_iter; ++it) {
    bool accepted = false;
    double fnew = fx;
    for (int bt = 0; bt < 60 && !accepted; ++bt) {
      xnew = project_location(set, k, y - t * vg.gradient);
      const Vector diff = xnew - y;
      try {
        fnew = objective(xnew).value;
      } catch (const std::domain_error&) {
        t *= 0.5;
        continue;
      }
      // the cushion absorbs summation noise in the objective evaluation
      if (fnew <= vg.value + vg.gradient.dot(diff) + diff.squaredNorm() / (2.0 * t) +
                      1e-12 * (1.0 + std::abs(vg.value))) {
        out.residual = diff.norm() / t;
        accepted = true;
      } else {
        t *= 0.5;
      }
    }
    out.iterations = it + 1;
    if (!accepted) {
      out.residual = 0.0;
      out.converged = true;  // no feasible progress at machine step; stationary
      break;
    }
    if (out.residual <= grad_tol) {
      x = xnew;
      fx = fnew;
      out.trace.push_back(fx);
      out.converged = true;
      break;
    }
    if (fnew > fx && theta > 1.0) {
      // adaptive restart: extrapolation overshot, drop momentum and retry from x
      theta = 1.0;
      y = x;
      vg = objective(y);
      continue;
    }
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    y = xnew + ((theta - 1.0) / theta_next) * (xnew - x);
    x = xnew;
    fx = fnew;
    theta = theta_next;
    out.trace.push_back(fx);
    try {
      vg = objective(y);
    } catch (const std::domain_error&) {
      // extrapolated point left the objective's domain; restart from x
      theta = 1.0;
      y = x;
      vg = objective(y);
    }
    t = std::min(t * 1.3, 1e6);
  }
  out.x = x;
  return out;
}

// Korpelevich extragradient with step halving over one location block.
template <typename Field>
BlockOutcome solve_eg_block(const Field& field, const FeasibleSet& set, int k, const Vector& x0,
                            double gamma0, double grad_tol, const SolveOptions& options) {
  BlockOutcome out;
  Vector x = project_location(set, k, x0);
  double gamma = gamma0;
  Vector fx(x.size()), fy(x.size()), y(x.size()), xnew(x.size());
  for (int it = 0; it < options.max_iter; ++it) {
    fx = field(x);
    y = project_location(set, k, x - gamma * fx);
    out.residual = (x - y).norm() / gamma;
    out.trace.push_back(out.residual);
    out.iterations = it + 1;
    if (out.residual <= grad_tol) {
      out.converged = true;
      break;
    }
    fy = field(y);
    int halvings = 0;
    while (gamma * (fx - fy).norm() > 0.9 * (x - y).norm() && halvings < 60) {
      gamma *= 0.5;
      y = project_location(set, k, x - gamma * fx);
      fy = field(y);
      ++halvings;
    }
    if (halvings == 60)
      throw std::runtime_error("estimate_vi: step-size line search failed at location " +
                               std::to_string(k) + ", residual " + std::to_string(out.residual));
    x = project_location(set, k, x - gamma * fy);
    if (halvings == 0) gamma *= 1.05;
  }
  out.x = x;
  return out;
}

EstimateResult merge_blocks(const ModelSpec& spec, std::vector<BlockOutcome>& blocks) {
  const Index B = spec.location_block_size();
  EstimateResult result;
  result.beta_hat = ParamVector(spec);
  std::size_t longest = 0;
  for (int k = 0; k < spec.K; ++k) {
    result.beta_hat.values.segment(k * B, B) = blocks[k].x;
    result.residual = std::max(result.residual, blocks[k].residual);
    result.iterations = std::max(result.iterations, blocks[k].iterations);
    result.block_converged.push_back(blocks[k].converged ? 1 : 0);
    result.block_degenerate.push_back(blocks[k].degenerate ? 1 : 0);
    result.converged = result.converged && blocks[k].converged;
    longest = std::max(longest, blocks[k].trace.size());
  }
  result.objective_trace.assign(longest, 0.0);
  for (int k = 0; k < spec.K; ++k)
    for (std::size_t i = 0; i < longest; ++i)
      result.objective_trace[i] +=
          blocks[k].trace.empty()
              ? 0.0
              : blocks[k].trace[std::min(i, blocks[k].trace.size() - 1)];
  return result;
}

double gram_lipschitz(const Matrix& gram) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  return std::max(es.eigenvalues().maxCoeff(), 1e-12);
}

// Minimal blend toward a uniformly feasible interior point that makes the
// ML objective evaluable.
template <typename Objective>
Vector strictly_feasible_start(const Objective& objective, const FeasibleSet& set, int k,
                               const Vector& warm, double rho) {
  const ModelSpec& spec = set.spec;
  Vector uniform = Vector::Zero(spec.location_block_size());
  const double c = 0.5 * (rho + (1.0 - rho) / spec.M);
  for (int p = 0; p < spec.M; ++p) uniform[p] = c;
  uniform = project_location(set, k, uniform);
  for (double alpha : {0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.3, 0.6, 1.0}) {
    Vector x = project_location(set, k, (1.0 - alpha) * warm + alpha * uniform);
    try {
      objective(x);
      return x;
    } catch (const std::domain_error&) {
    }
  }
  throw std::runtime_error("estimate_ml: no strictly feasible starting point at location " +
                           std::to_string(k));
}

}  // namespace

EstimateResult estimate_ls(const SuffStats& stats, const FeasibleSet& set,
                           const SolveOptions& options) {
  const ModelSpec& spec = stats.spec;
  if (!(set.spec == spec)) throw std::invalid_argument("estimate_ls: spec mismatch");
  const double grad_tol = default_grad_tol(stats, options);
  const double L = gram_lipschitz(stats.gram);
  std::vector<BlockOutcome> blocks(spec.K);
  parallel_for(
      spec.K,
      [&](int k) {
        QuadBlock quad{stats.gram, Matrix(), spec.M, spec.feature_count()};
        quad.acols.resize(spec.feature_count(), spec.M);
        for (int p = 0; p < spec.M; ++p)
          quad.acols.col(p) = stats.moments.col(stats.moment_col(k, p + 1));
        Vector x0 = moments_block(stats, k);
        blocks[k] = solve_ls_block(quad, set, k, x0, L, grad_tol, options);
        blocks[k].degenerate = quad.acols.isZero(0.0);
      },
      options.threads);
  return merge_blocks(spec, blocks);
}

EstimateResult estimate_ls(const EventPanel& panel, const FeasibleSet& set,
                           const SolveOptions& options) {
  return estimate_ls(accumulate(panel), set, options);
}

EstimateResult estimate_ml(const EventPanel& panel, const FeasibleSet& set_with_rho,
                           const SolveOptions& options) {
  const ModelSpec& spec = panel.spec;
  if (!(set_with_rho.spec == spec)) throw std::invalid_argument("estimate_ml: spec mismatch");
  bool has_rho = false;
  for (const auto& atom : set_with_rho.atoms)
    if (const auto* bp = std::get_if<BasicPolytope>(&atom); bp && bp->rho > 0.0) has_rho = true;
  if (!has_rho)
    throw std::invalid_argument("estimate_ml: constraint set must include BasicPolytope(rho > 0)");

  SuffStats stats = accumulate(panel);
  const double grad_tol = default_grad_tol(stats, options);
  PanelFeatures feats = panel_features(panel);
  EstimateResult warm = estimate_ls(stats, set_with_rho, options);

  const Index B = spec.location_block_size();
  std::vector<BlockOutcome> blocks(spec.K);
  parallel_for(
      spec.K,
      [&](int k) {
        auto objective = [&](const Vector& block) {
          return ml_objective_location(block, panel, feats, k, options.rho);
        };
        Vector x0 = strictly_feasible_start(objective, set_with_rho, k,
                                            warm.beta_hat.values.segment(k * B, B), options.rho);
        // The worst-case smoothness constant L / rho^2 is far too pessimistic
        // when the observed probabilities sit away from the rho floor, and a
        // matching step is small enough to drown progress in rounding noise;
        // start at unit step and let backtracking find the local scale.
        blocks[k] = solve_pg_block(objective, set_with_rho, k, x0, 1.0, grad_tol, options);
      },
      options.threads);
  return merge_blocks(spec, blocks);
}

EstimateResult estimate_ml_logistic(const EventPanel& panel, const FeasibleSet& set,
                                    const SolveOptions& options) {
  const ModelSpec& spec = panel.spec;
  if (!(set.spec == spec)) throw std::invalid_argument("estimate_ml_logistic: spec mismatch");
  SuffStats stats = accumulate(panel);
  const double grad_tol = default_grad_tol(stats, options);
  const double L = gram_lipschitz(stats.gram);
  PanelFeatures feats = panel_features(panel);
  std::vector<BlockOutcome> blocks(spec.K);
  parallel_for(
      spec.K,
      [&](int k) {
        auto objective = [&](const Vector& block) {
          return ml_logistic_objective_location(block, panel, feats, k);
        };
        Vector x0 = project_location(set, k, Vector::Zero(spec.location_block_size()));
        blocks[k] = solve_pg_block(objective, set, k, x0, 4.0 / L, grad_tol, options);
      },
      options.threads);
  return merge_blocks(spec, blocks);
}

EstimateResult estimate_vi(const EventPanel& panel, Link link, const FeasibleSet& set,
                           const SolveOptions& options) {
  if (link == Link::Identity) return estimate_ls(panel, set, options);
  const ModelSpec& spec = panel.spec;
  if (!(set.spec == spec)) throw std::invalid_argument("estimate_vi: spec mismatch");
  SuffStats stats = accumulate(panel);
  const double grad_tol = default_grad_tol(stats, options);
  const double L = gram_lipschitz(stats.gram);
  PanelFeatures feats = panel_features(panel);
  std::vector<BlockOutcome> blocks(spec.K);
  parallel_for(
      spec.K,
      [&](int k) {
        auto field = [&](const Vector& block) {
          return empirical_field_location(block, panel, feats, k, link);
        };
        Vector x0 = Vector::Zero(spec.location_block_size());
        blocks[k] = solve_eg_block(field, set, k, x0, 4.0 / L, grad_tol, options);
      },
      options.threads);
  return merge_blocks(spec, blocks);
}

}  // namespace stbp
