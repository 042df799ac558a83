#include "stbp/uncertainty.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "stbp/parallel.hpp"

namespace stbp {

namespace {

void require_symmetric(const Matrix& A, const char* who) {
  if (A.rows() != A.cols() || (A - A.transpose()).lpNorm<Eigen::Infinity>() >
                                  1e-8 * (1.0 + A.lpNorm<Eigen::Infinity>()))
    throw std::invalid_argument(std::string(who) + ": matrix must be symmetric");
}

double lambda_max(const Matrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

// min x'Ax over the box |x|_inf <= 1 with x_i pinned to 1 (convex QP).
double box_qp_min(const Matrix& A, Index i) {
  const Index n = A.rows();
  const double L = std::max(lambda_max(A), 1e-12);
  double best = A(i, i);
  std::vector<Vector> starts;
  starts.push_back(Vector::Zero(n));
  Vector s2 = -A.col(i).array().sign();
  starts.push_back(s2);
  for (Vector& x : starts) {
    x[i] = 1.0;
    for (int it = 0; it < 5000; ++it) {
      Vector g = 2.0 * (A * x);
      Vector xn = (x - g / (2.0 * L)).cwiseMax(-1.0).cwiseMin(1.0);
      xn[i] = 1.0;
      const double move = (xn - x).lpNorm<Eigen::Infinity>();
      x = xn;
      if (move < 1e-12) break;
    }
    best = std::min(best, x.dot(A * x));
  }
  return best;
}

// One pass of coordinate descent on min sum(lambda) s.t. Diag(lambda) >= Q
// (Loewner order); the per-coordinate minimum is the Schur complement value.
double schur_descend(const Matrix& Q, Vector& lambda, int passes) {
  const Index n = Q.rows();
  if (n == 1) {
    lambda[0] = Q(0, 0);
    return lambda.sum();
  }
  for (int pass = 0; pass < passes; ++pass) {
    double before = lambda.sum();
    for (Index i = 0; i < n; ++i) {
      Matrix S(n - 1, n - 1);
      Vector q(n - 1);
      Index r = 0;
      for (Index a = 0; a < n; ++a) {
        if (a == i) continue;
        q[r] = Q(a, i);
        Index c = 0;
        for (Index b = 0; b < n; ++b) {
          if (b == i) continue;
          S(r, c) = (a == b ? lambda[a] : 0.0) - Q(a, b);
          ++c;
        }
        ++r;
      }
      Eigen::SelfAdjointEigenSolver<Matrix> es(S);
      const Vector& ev = es.eigenvalues();
      const double cut = std::max(ev.maxCoeff(), 1.0) * 1e-12;
      Vector w = es.eigenvectors().transpose() * q;
      double val = Q(i, i);
      bool in_range = true;
      for (Index j = 0; j < n - 1; ++j) {
        if (ev[j] > cut)
          val += w[j] * w[j] / ev[j];
        else if (std::abs(w[j]) > 1e-9 * (1.0 + q.norm()))
          in_range = false;
      }
      if (in_range && val < lambda[i]) lambda[i] = val;
    }
    if (before - lambda.sum() < 1e-13 * (1.0 + before)) break;
  }
  return lambda.sum();
}

double theta1_lower_bound(const Matrix& A) {
  const Index n = A.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  const Vector& ev = es.eigenvalues();
  if (ev.minCoeff() <= 1e-12 * std::max(ev.maxCoeff(), 1.0))
    throw std::invalid_argument("theta_p: p=1 requires a positive definite matrix");
  Matrix Q = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();

  Vector lam_dom = Q.cwiseAbs().rowwise().sum();
  Vector lam_eig = Vector::Constant(n, lambda_max(Q));
  double best = std::min(schur_descend(Q, lam_dom, 40), schur_descend(Q, lam_eig, 40));
  const Vector& lam = lam_dom.sum() <= lam_eig.sum() ? lam_dom : lam_eig;
  // certify feasibility, shifting by any numerical violation
  Matrix D = Matrix(lam.asDiagonal()) - Q;
  Eigen::SelfAdjointEigenSolver<Matrix> chk(D, Eigen::EigenvaluesOnly);
  const double viol = std::max(0.0, -chk.eigenvalues().minCoeff());
  best = std::min(best, lam.sum());
  if (viol > 0.0) best += n * (viol + 1e-14);
  return 1.0 / best;
}

}  // namespace

double theta_p(const Matrix& A, int p) {
  require_symmetric(A, "theta_p");
  switch (p) {
    case 2: {
      Eigen::SelfAdjointEigenSolver<Matrix> es(A, Eigen::EigenvaluesOnly);
      return std::max(es.eigenvalues().minCoeff(), 0.0);
    }
    case 0: {  // sup norm
      double best = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < A.rows(); ++i) best = std::min(best, box_qp_min(A, i));
      return std::max(best, 0.0);
    }
    case 1:
      return theta1_lower_bound(A);
    default:
      throw std::invalid_argument("theta_p: p must be 1, 2, or 0 (sup norm)");
  }
}

DeviationBound deviation_bound(Index N, Index kappa, double epsilon, double Theta) {
  if (epsilon <= 0.0 || epsilon >= 1.0)
    throw std::invalid_argument("deviation_bound: epsilon must lie in (0,1)");
  if (N < 1 || kappa < 1) throw std::invalid_argument("deviation_bound: N, kappa must be >= 1");
  DeviationBound out;
  out.epsilon = epsilon;
  out.Theta = Theta;
  out.kappa = kappa;
  out.N = N;
  const double lg = std::log(2.0 * static_cast<double>(kappa) / epsilon);
  out.delta_inf = Theta * (std::sqrt(lg / (2.0 * N)) + lg / (3.0 * N));
  return out;
}

RiskBound risk_bound(const Matrix& A, Index N, Index kappa, double epsilon, int p, double Theta) {
  RiskBound out;
  out.deviation = deviation_bound(N, kappa, epsilon, Theta);
  out.theta_p_value = theta_p(A, p);
  out.theta1_lower = theta_p(A, 1);
  out.p = p;
  if (out.theta_p_value <= 0.0)
    throw std::invalid_argument("risk_bound: theta_p is zero; matrix not positive definite");
  out.value = out.deviation.delta_inf / std::sqrt(out.theta_p_value * out.theta1_lower);
  return out;
}

PsiPair psi_bounds(double nu, Index N, double y) {
  if (nu < -1e-12 || nu > 1.0 + 1e-12)
    throw std::invalid_argument("psi_bounds: nu must lie in [0,1]");
  nu = std::min(std::max(nu, 0.0), 1.0);
  if (N < 1) throw std::invalid_argument("psi_bounds: N must be >= 1");
  if (y <= 1.0) throw std::invalid_argument("psi_bounds: y must exceed 1");
  const double n = static_cast<double>(N);
  PsiPair out;
  if (nu > y / (3.0 * n)) {
    double disc = 2.0 * n * nu * y + y * y / 3.0 -
                  (2.0 * y / n) * std::pow(y / 3.0 - nu * n, 2);
    if (disc < -1e-9 * (1.0 + y * y)) throw std::runtime_error("psi_bounds: negative discriminant");
    disc = std::max(disc, 0.0);
    out.lower = (n * nu + 2.0 * y / 3.0 - std::sqrt(disc)) / (n + 2.0 * y);
  } else {
    out.lower = 0.0;
  }
  if (nu < 1.0 - y / (3.0 * n)) {
    double disc = 2.0 * n * nu * y + 5.0 * y * y / 3.0 -
                  (2.0 * y / n) * std::pow(y / 3.0 + nu * n, 2);
    if (disc < -1e-9 * (1.0 + y * y)) throw std::runtime_error("psi_bounds: negative discriminant");
    disc = std::max(disc, 0.0);
    out.upper = (n * nu + 4.0 * y / 3.0 + std::sqrt(disc)) / (n + 2.0 * y);
  } else {
    out.upper = 1.0;
  }
  out.lower = std::min(std::max(out.lower, 0.0), 1.0);
  out.upper = std::min(std::max(out.upper, 0.0), 1.0);
  return out;
}

double coverage_level(double y, Index kappa, Index N) {
  if (y <= 1.0) throw std::invalid_argument("coverage_level: y must exceed 1");
  const double e1 = std::exp(1.0);
  const double bracket = y * (std::log((y - 1.0) * N) + 2.0) + 2.0;
  return 1.0 - 2.0 * kappa * e1 * bracket * std::exp(-y);
}

double coverage_level_inverse(double target, Index kappa, Index N) {
  if (target >= 1.0) throw std::invalid_argument("coverage_level_inverse: target must be < 1");
  // locate the minimum of the level curve, then bisect on the rising branch
  const double y_hi = 700.0;
  double y_min = 1.0 + 1e-6, v_min = coverage_level(y_min, kappa, N);
  for (double y = 1.0 + 1e-6; y < 80.0; y += 0.005) {
    const double v = coverage_level(y, kappa, N);
    if (v < v_min) {
      v_min = v;
      y_min = y;
    }
  }
  if (coverage_level(y_hi, kappa, N) < target)
    throw std::runtime_error("coverage_level_inverse: target level unattainable");
  if (v_min >= target) return y_min;
  double lo = y_min, hi = y_hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (coverage_level(mid, kappa, N) >= target ? hi : lo) = mid;
    if (hi - lo < 1e-12 * (1.0 + hi)) break;
  }
  return hi;
}

namespace {

struct LpResult {
  bool feasible = true;
  bool bounded = true;
  double value = 0.0;
  double infeasibility = 0.0;  // phase-one objective when infeasible
  int pivots = 0;
};

// Dense two-phase tableau simplex for  min c.z  s.t.  G z <= h,  z free.
// Free variables split as z = u - w; rows with negative right-hand side get
// an artificial variable for the feasibility phase.
LpResult simplex_solve(const Matrix& G, const Vector& h, const Vector& c, int max_pivots) {
  const Index m = G.rows(), n = G.cols();
  const double tol = 1e-9;
  std::vector<Index> art_of_row(m, -1);
  Index na = 0;
  for (Index i = 0; i < m; ++i)
    if (h[i] < 0.0) art_of_row[i] = na++;
  const Index ncols = 2 * n + m + na;  // u, w, slack/surplus, artificials
  Matrix T(m, ncols + 1);
  T.setZero();
  std::vector<Index> basis(m);
  for (Index i = 0; i < m; ++i) {
    const double sign = art_of_row[i] >= 0 ? -1.0 : 1.0;
    T.row(i).segment(0, n) = sign * G.row(i);
    T.row(i).segment(n, n) = -sign * G.row(i);
    T(i, 2 * n + i) = sign;  // slack (+1) or surplus (-1)
    T(i, ncols) = sign * h[i];
    if (art_of_row[i] >= 0) {
      T(i, 2 * n + m + art_of_row[i]) = 1.0;
      basis[i] = 2 * n + m + art_of_row[i];
    } else {
      basis[i] = 2 * n + i;
    }
  }
  Vector rc(ncols);
  double obj = 0.0;
  auto reset_costs = [&](const Vector& cost) {
    rc = cost;
    obj = 0.0;
    for (Index i = 0; i < m; ++i)
      if (cost[basis[i]] != 0.0) {
        rc -= cost[basis[i]] * T.row(i).head(ncols).transpose();
        obj += cost[basis[i]] * T(i, ncols);
      }
  };
  LpResult out;
  auto run = [&](bool allow_artificials) -> bool {
    for (;;) {
      if (out.pivots >= max_pivots) return true;
      const bool bland = out.pivots > max_pivots / 2;
      Index enter = -1;
      double best = -tol;
      const Index limit = allow_artificials ? ncols : 2 * n + m;
      for (Index j = 0; j < limit; ++j) {
        if (rc[j] < best) {
          best = rc[j];
          enter = j;
          if (bland) break;
        }
      }
      if (enter < 0) return true;  // optimal
      Index leave = -1;
      double ratio = 0.0;
      for (Index i = 0; i < m; ++i) {
        if (T(i, enter) <= tol) continue;
        const double r = T(i, ncols) / T(i, enter);
        if (leave < 0 || r < ratio - 1e-12 ||
            (r < ratio + 1e-12 && basis[i] < basis[leave])) {
          leave = i;
          ratio = r;
        }
      }
      if (leave < 0) return false;  // unbounded
      const double piv = T(leave, enter);
      T.row(leave) /= piv;
      for (Index i = 0; i < m; ++i)
        if (i != leave && std::abs(T(i, enter)) > 0.0) T.row(i) -= T(i, enter) * T.row(leave);
      obj += rc[enter] * T(leave, ncols);
      rc -= rc[enter] * T.row(leave).head(ncols).transpose();
      basis[leave] = enter;
      ++out.pivots;
    }
  };
  if (na > 0) {
    Vector phase1 = Vector::Zero(ncols);
    phase1.tail(na).setConstant(1.0);
    reset_costs(phase1);
    run(true);
    if (obj > 1e-8 * (1.0 + h.cwiseAbs().maxCoeff())) {
      out.feasible = false;
      out.infeasibility = obj;
      return out;
    }
    // drive remaining zero-level artificials out of the basis when possible
    for (Index i = 0; i < m; ++i) {
      if (basis[i] < 2 * n + m) continue;
      for (Index j = 0; j < 2 * n + m; ++j)
        if (std::abs(T(i, j)) > tol) {
          const double piv = T(i, j);
          T.row(i) /= piv;
          for (Index r = 0; r < m; ++r)
            if (r != i && std::abs(T(r, j)) > 0.0) T.row(r) -= T(r, j) * T.row(i);
          basis[i] = j;
          break;
        }
    }
  }
  Vector phase2 = Vector::Zero(ncols);
  phase2.head(n) = c;
  phase2.segment(n, n) = -c;
  reset_costs(phase2);
  out.bounded = run(false);
  out.value = obj;
  return out;
}

// Local slot offsets within a location block, mirroring the flat layout.
Index local_baseline(const ModelSpec&, int p) { return p - 1; }
Index local_interaction(const ModelSpec& spec, int l, int s, int q, int p) {
  return spec.M + (feature_index(spec, l, s, q) - 1) * spec.M + (p - 1);
}

// Inequality description G z <= h of one location block of the feasible set
// intersected with the moment band lo <= (Gram x) <= up. The min/max
// envelope rows of the feasibility polytope are lifted with one auxiliary
// variable per (target state, source, lag) group, which is exact for the
// projection onto the block coordinates.
struct BlockLp {
  Matrix G;
  Vector h;
  Index nvars = 0;
};

BlockLp build_block_lp(const SuffStats& stats, const FeasibleSet& set, int k, const Vector& lo,
                       const Vector& up) {
  const ModelSpec& spec = set.spec;
  const Index B = spec.location_block_size();
  const Index F = spec.feature_count();
  const Index groups = static_cast<Index>(spec.d) * spec.K;  // (l, s) pairs
  bool has_poly = false;
  for (const auto& atom : set.atoms)
    if (std::get_if<BasicPolytope>(&atom)) has_poly = true;
  const Index nlow = has_poly ? groups * spec.M : 0;  // min-envelope slack per (l,s,p)
  const Index nup = has_poly ? groups : 0;            // max-envelope slack per (l,s)
  const Index nvars = B + nlow + nup;
  auto low_aux = [&](Index g, int p) { return B + g * spec.M + (p - 1); };
  auto up_aux = [&](Index g) { return B + nlow + g; };

  std::vector<Vector> rows;
  std::vector<double> rhs;
  auto add_row = [&](const Vector& row, double b) {
    rows.push_back(row);
    rhs.push_back(b);
  };

  for (const auto& atom : set.atoms) {
    if (const auto* bp = std::get_if<BasicPolytope>(&atom)) {
      for (int p = 1; p <= spec.M; ++p) {
        Vector main = Vector::Zero(nvars);
        main[local_baseline(spec, p)] = -1.0;
        Index g = 0;
        for (int l = 0; l < spec.K; ++l)
          for (int s = 1; s <= spec.d; ++s, ++g) {
            main[low_aux(g, p)] = -1.0;
            for (int q = 0; q <= spec.M; ++q) {
              Vector row = Vector::Zero(nvars);
              row[low_aux(g, p)] = 1.0;
              row[local_interaction(spec, l, s, q, p)] = -1.0;
              add_row(row, 0.0);  // aux <= min_q coordinate
            }
          }
        add_row(main, -bp->rho);  // rho <= baseline + sum of mins
      }
      Vector main = Vector::Zero(nvars);
      for (int p = 1; p <= spec.M; ++p) main[local_baseline(spec, p)] = 1.0;
      Index g = 0;
      for (int l = 0; l < spec.K; ++l)
        for (int s = 1; s <= spec.d; ++s, ++g) {
          main[up_aux(g)] = 1.0;
          for (int q = 0; q <= spec.M; ++q) {
            Vector row = Vector::Zero(nvars);
            row[up_aux(g)] = -1.0;
            for (int p = 1; p <= spec.M; ++p) row[local_interaction(spec, l, s, q, p)] = 1.0;
            add_row(row, 0.0);  // column sum <= aux
          }
        }
      add_row(main, 1.0 - bp->rho);  // baselines + sum of maxes <= 1 - rho
    } else if (const auto* box = std::get_if<Box>(&atom)) {
      for (Index i = 0; i < B; ++i) {
        Vector row = Vector::Zero(nvars);
        row[i] = 1.0;
        if (std::isfinite(box->upper[k * B + i])) add_row(row, box->upper[k * B + i]);
        row[i] = -1.0;
        if (std::isfinite(box->lower[k * B + i])) add_row(row, -box->lower[k * B + i]);
      }
    } else if (const auto* mask = std::get_if<ZeroMask>(&atom)) {
      for (Index s : mask->slots) {
        if (s < k * B || s >= (k + 1) * B) continue;
        Vector row = Vector::Zero(nvars);
        row[s - k * B] = 1.0;
        add_row(row, 0.0);
        row[s - k * B] = -1.0;
        add_row(row, 0.0);
      }
    } else if (const auto* loc = std::get_if<LocalityMask>(&atom)) {
      for (int l = 0; l < spec.K; ++l) {
        if (std::abs(k - l) <= loc->radius) continue;
        for (int s = 1; s <= spec.d; ++s)
          for (int q = 0; q <= spec.M; ++q)
            for (int p = 1; p <= spec.M; ++p) {
              Vector row = Vector::Zero(nvars);
              row[local_interaction(spec, l, s, q, p)] = 1.0;
              add_row(row, 0.0);
              row[local_interaction(spec, l, s, q, p)] = -1.0;
              add_row(row, 0.0);
            }
      }
    } else if (std::get_if<ShapeMonotoneConvex>(&atom)) {
      if (spec.d <= 1) continue;
      for (int l = 0; l < spec.K; ++l)
        for (int q = 0; q <= spec.M; ++q)
          for (int p = 1; p <= spec.M; ++p) {
            for (int s = 1; s + 1 <= spec.d; ++s) {
              Vector row = Vector::Zero(nvars);
              row[local_interaction(spec, l, s + 1, q, p)] = 1.0;
              row[local_interaction(spec, l, s, q, p)] = -1.0;
              add_row(row, 0.0);  // non-increasing
            }
            for (int s = 1; s + 2 <= spec.d; ++s) {
              Vector row = Vector::Zero(nvars);
              row[local_interaction(spec, l, s, q, p)] = -1.0;
              row[local_interaction(spec, l, s + 1, q, p)] = 2.0;
              row[local_interaction(spec, l, s + 2, q, p)] = -1.0;
              add_row(row, 0.0);  // convex
            }
          }
    } else if (std::get_if<NonnegativeInteractions>(&atom)) {
      for (Index i = spec.M; i < B; ++i) {
        Vector row = Vector::Zero(nvars);
        row[i] = -1.0;
        add_row(row, 0.0);
      }
    }
  }

  // moment band rows: lo <= (Gram applied blockwise) x <= up
  for (int p = 1; p <= spec.M; ++p)
    for (Index j = 0; j < F; ++j) {
      const Index i = (p - 1) + j * spec.M;
      Vector row = Vector::Zero(nvars);
      for (Index j2 = 0; j2 < F; ++j2) row[(p - 1) + j2 * spec.M] = stats.gram(j, j2);
      add_row(row, up[i]);
      add_row(Vector(-row), -lo[i]);
    }

  BlockLp lp;
  lp.nvars = nvars;
  lp.G.resize(static_cast<Index>(rows.size()), nvars);
  lp.h.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    lp.G.row(static_cast<Index>(r)) = rows[r].transpose();
    lp.h[static_cast<Index>(r)] = rhs[r];
  }
  return lp;
}

}  // namespace

ConfintResult confint_linear(const Vector& e, const SuffStats& stats, const FeasibleSet& set,
                             const ConfintOptions& options) {
  const ModelSpec& spec = stats.spec;
  if (!(set.spec == spec)) throw std::invalid_argument("confint_linear: spec mismatch");
  if (e.size() != spec.param_count())
    throw std::invalid_argument("confint_linear: functional has wrong size");
  const Index kappa = spec.param_count();
  const Index B = spec.location_block_size();
  ConfintResult result;
  result.y = options.y > 1.0 ? options.y
                             : coverage_level_inverse(options.target_coverage, kappa, stats.N);
  result.coverage = coverage_level(result.y, kappa, stats.N);

  const Vector a = stats.moments_flat();
  Vector lo(kappa), up(kappa);
  for (Index i = 0; i < kappa; ++i) {
    PsiPair band = psi_bounds(a[i], stats.N, result.y);
    lo[i] = band.lower;
    up[i] = band.upper;
    if (a[i] == 0.0) result.zero_rate_coords.push_back(i);
  }

  std::vector<int> touched;
  for (int k = 0; k < spec.K; ++k)
    if (e.segment(k * B, B).cwiseAbs().maxCoeff() > 0.0) touched.push_back(k);
  if (touched.empty()) return result;  // e = 0 -> the interval [0, 0]

  std::vector<LpResult> sides(2 * touched.size());
  parallel_for(
      static_cast<int>(sides.size()),
      [&](int job) {
        const int k = touched[job / 2];
        BlockLp lp = build_block_lp(stats, set, k, lo.segment(k * B, B), up.segment(k * B, B));
        Vector c = Vector::Zero(lp.nvars);
        c.head(B) = (job % 2 == 0 ? 1.0 : -1.0) * e.segment(k * B, B);
        sides[job] = simplex_solve(lp.G, lp.h, c, options.max_iter);
      },
      options.threads);
  for (std::size_t j = 0; j < touched.size(); ++j) {
    const LpResult& mn = sides[2 * j];
    const LpResult& mx = sides[2 * j + 1];
    if (!mn.feasible || !mx.feasible) {
      result.infeasible = true;
      result.kkt_residual = std::max({result.kkt_residual, mn.infeasibility, mx.infeasibility});
      continue;
    }
    result.lower += mn.bounded ? mn.value : -std::numeric_limits<double>::infinity();
    result.upper += mx.bounded ? -mx.value : std::numeric_limits<double>::infinity();
    result.iterations = std::max({result.iterations, mn.pivots, mx.pivots});
  }
  if (result.lower > result.upper && !result.infeasible) {
    if (result.lower - result.upper > 1e-6 * (1.0 + std::abs(result.lower)))
      result.infeasible = true;
    else
      std::swap(result.lower, result.upper);
  }
  return result;
}

}  // namespace stbp
