#include "stbp/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace stbp {

std::string atom_name(const ConstraintAtom& atom) {
  struct Visitor {
    std::string operator()(const BasicPolytope&) const { return "basic_polytope"; }
    std::string operator()(const Box&) const { return "box"; }
    std::string operator()(const ZeroMask&) const { return "zero_mask"; }
    std::string operator()(const LocalityMask&) const { return "locality_mask"; }
    std::string operator()(const ShapeMonotoneConvex&) const { return "shape_monotone_convex"; }
    std::string operator()(const NonnegativeInteractions&) const {
      return "nonnegative_interactions";
    }
  };
  return std::visit(Visitor{}, atom);
}

std::vector<Index> ground_state_slots(const ModelSpec& spec) {
  std::vector<Index> slots;
  for (int k = 0; k < spec.K; ++k)
    for (int l = 0; l < spec.K; ++l)
      for (int s = 1; s <= spec.d; ++s)
        for (int p = 1; p <= spec.M; ++p)
          slots.push_back(param_index_interaction(spec, k, l, s, 0, p));
  return slots;
}

FeasibleSet basic_feasible_set(const ModelSpec& spec, double rho) {
  FeasibleSet set(spec);
  set.add(BasicPolytope{rho});
  if (spec.M == 1 && spec.d > 0) set.add(ZeroMask{ground_state_slots(spec)});
  return set;
}

Vector simplex_project(const Vector& v, double r) {
  const Index n = v.size();
  if (r <= 0.0) return Vector::Zero(n);
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cssv = 0.0, theta = 0.0;
  Index rho = 0;
  for (Index i = 0; i < n; ++i) {
    cssv += u[i];
    const double t = (cssv - r) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) {
      rho = i + 1;
      theta = t;
    }
  }
  (void)rho;
  return (v.array() - theta).cwiseMax(0.0);
}

Vector shape_project(const Vector& curve) {
  const Index d = curve.size();
  if (d <= 1) return curve;
  // Rows of G: first differences f_s - f_{s+1}, then second differences.
  const Index m1 = d - 1, m2 = d >= 3 ? d - 2 : 0, m = m1 + m2;
  Matrix G = Matrix::Zero(m, d);
  for (Index s = 0; s < m1; ++s) {
    G(s, s) = 1.0;
    G(s, s + 1) = -1.0;
  }
  for (Index s = 0; s < m2; ++s) {
    G(m1 + s, s) = 1.0;
    G(m1 + s, s + 1) = -2.0;
    G(m1 + s, s + 2) = 1.0;
  }
  // Dual projected Gauss-Seidel: y = x + G^T lambda, lambda >= 0.
  Matrix GGt = G * G.transpose();
  Vector gx = G * curve;
  Vector lambda = Vector::Zero(m);
  for (int iter = 0; iter < 200000; ++iter) {
    double change = 0.0;
    for (Index i = 0; i < m; ++i) {
      const double grad = GGt.row(i).dot(lambda) + gx[i];
      const double next = std::max(0.0, lambda[i] - grad / GGt(i, i));
      change = std::max(change, std::abs(next - lambda[i]));
      lambda[i] = next;
    }
    if (change < 1e-14) break;
  }
  return curve + G.transpose() * lambda;
}

namespace {

// ---- per-location constraint pieces -------------------------------------

// Slot offsets below are relative to the location block (size B).

struct LocalSlots {
  const ModelSpec& spec;
  Index baseline(int p) const { return p - 1; }
  Index interaction(int l, int s, int q, int p) const {
    return spec.M + (feature_index(spec, l, s, q) - 1) * spec.M + (p - 1);
  }
};

struct Piece {
  virtual ~Piece() = default;
  virtual void project(Vector& x) const = 0;
};

// rho <= x_p + sum_{l,s} min_q x(p,q); exact projection via the dual of the
// single-constraint problem, with a simplex-projection prox per (l,s) group.
struct LowerPolyPiece final : Piece {
  ModelSpec spec;
  int p;
  double rho;

  LowerPolyPiece(const ModelSpec& s, int p_, double rho_) : spec(s), p(p_), rho(rho_) {}

  double value_at(const Vector& x, double lambda, Vector* out) const {
    LocalSlots slots{spec};
    const int M = spec.M;
    double total = x[slots.baseline(p)] + lambda - rho;
    if (out) (*out)[slots.baseline(p)] = x[slots.baseline(p)] + lambda;
    Vector v(M + 1), adj(M + 1);
    for (int l = 0; l < spec.K; ++l)
      for (int s = 1; s <= spec.d; ++s) {
        for (int q = 0; q <= M; ++q) v[q] = x[slots.interaction(l, s, q, p)];
        if (lambda > 0.0)
          adj = v + simplex_project(-v, lambda);
        else
          adj = v;
        total += adj.minCoeff();
        if (out)
          for (int q = 0; q <= M; ++q) (*out)[slots.interaction(l, s, q, p)] = adj[q];
      }
    return total;
  }

  void project(Vector& x) const override {
    if (value_at(x, 0.0, nullptr) >= 0.0) return;
    double lo = 0.0, hi = 1.0;
    while (value_at(x, hi, nullptr) < 0.0) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      (value_at(x, mid, nullptr) < 0.0 ? lo : hi) = mid;
    }
    Vector y = x;
    value_at(x, hi, &y);
    x = y;
  }
};

// sum_p x_p + sum_{l,s} max_q sum_p x(p,q) <= 1 - rho.
struct UpperPolyPiece final : Piece {
  ModelSpec spec;
  double rho;

  UpperPolyPiece(const ModelSpec& s, double rho_) : spec(s), rho(rho_) {}

  double value_at(const Vector& x, double lambda, Vector* out) const {
    LocalSlots slots{spec};
    const int M = spec.M;
    double total = -(1.0 - rho);
    for (int p = 1; p <= M; ++p) {
      total += x[slots.baseline(p)] - lambda;
      if (out) (*out)[slots.baseline(p)] = x[slots.baseline(p)] - lambda;
    }
    Vector colsum(M + 1), g(M + 1);
    for (int l = 0; l < spec.K; ++l)
      for (int s = 1; s <= spec.d; ++s) {
        for (int q = 0; q <= M; ++q) {
          double cs = 0.0;
          for (int p = 1; p <= M; ++p) cs += x[slots.interaction(l, s, q, p)];
          colsum[q] = cs;
        }
        if (lambda > 0.0)
          g = simplex_project(colsum / M, lambda);
        else
          g.setZero();
        // each entry of column q moves by -g_q, so the column sum by -M*g_q
        double mx = -std::numeric_limits<double>::infinity();
        for (int q = 0; q <= M; ++q) mx = std::max(mx, colsum[q] - M * g[q]);
        total += mx;
        if (out)
          for (int q = 0; q <= M; ++q)
            for (int p = 1; p <= M; ++p)
              (*out)[slots.interaction(l, s, q, p)] =
                  x[slots.interaction(l, s, q, p)] - g[q];
      }
    return total;
  }

  void project(Vector& x) const override {
    if (value_at(x, 0.0, nullptr) <= 0.0) return;
    double lo = 0.0, hi = 1.0;
    while (value_at(x, hi, nullptr) > 0.0) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      (value_at(x, mid, nullptr) > 0.0 ? lo : hi) = mid;
    }
    Vector y = x;
    value_at(x, hi, &y);
    x = y;
  }
};

struct BoxPiece final : Piece {
  Vector lower, upper;  // location slice
  void project(Vector& x) const override { x = x.cwiseMax(lower).cwiseMin(upper); }
};

struct MaskPiece final : Piece {
  std::vector<Index> slots;  // local offsets
  void project(Vector& x) const override {
    for (Index s : slots) x[s] = 0.0;
  }
};

struct NonnegPiece final : Piece {
  Index first;  // interactions start at offset M
  void project(Vector& x) const override {
    x.tail(x.size() - first) = x.tail(x.size() - first).cwiseMax(0.0);
  }
};

struct ShapePiece final : Piece {
  ModelSpec spec;
  explicit ShapePiece(const ModelSpec& s) : spec(s) {}
  void project(Vector& x) const override {
    LocalSlots slots{spec};
    Vector curve(spec.d);
    for (int l = 0; l < spec.K; ++l)
      for (int q = 0; q <= spec.M; ++q)
        for (int p = 1; p <= spec.M; ++p) {
          for (int s = 1; s <= spec.d; ++s) curve[s - 1] = x[slots.interaction(l, s, q, p)];
          Vector proj = shape_project(curve);
          for (int s = 1; s <= spec.d; ++s) x[slots.interaction(l, s, q, p)] = proj[s - 1];
        }
  }
};

std::vector<std::unique_ptr<Piece>> build_pieces(const FeasibleSet& set, int k) {
  const ModelSpec& spec = set.spec;
  const Index B = spec.location_block_size();
  LocalSlots slots{spec};
  std::vector<std::unique_ptr<Piece>> pieces;
  for (const auto& atom : set.atoms) {
    if (const auto* bp = std::get_if<BasicPolytope>(&atom)) {
      for (int p = 1; p <= spec.M; ++p)
        pieces.push_back(std::make_unique<LowerPolyPiece>(spec, p, bp->rho));
      pieces.push_back(std::make_unique<UpperPolyPiece>(spec, bp->rho));
    } else if (const auto* box = std::get_if<Box>(&atom)) {
      auto piece = std::make_unique<BoxPiece>();
      piece->lower = box->lower.segment(k * B, B);
      piece->upper = box->upper.segment(k * B, B);
      pieces.push_back(std::move(piece));
    } else if (const auto* mask = std::get_if<ZeroMask>(&atom)) {
      auto piece = std::make_unique<MaskPiece>();
      for (Index s : mask->slots)
        if (s >= k * B && s < (k + 1) * B) piece->slots.push_back(s - k * B);
      if (!piece->slots.empty()) pieces.push_back(std::move(piece));
    } else if (const auto* loc = std::get_if<LocalityMask>(&atom)) {
      auto piece = std::make_unique<MaskPiece>();
      for (int l = 0; l < spec.K; ++l) {
        if (std::abs(k - l) <= loc->radius) continue;
        for (int s = 1; s <= spec.d; ++s)
          for (int q = 0; q <= spec.M; ++q)
            for (int p = 1; p <= spec.M; ++p)
              piece->slots.push_back(slots.interaction(l, s, q, p));
      }
      if (!piece->slots.empty()) pieces.push_back(std::move(piece));
    } else if (std::get_if<ShapeMonotoneConvex>(&atom)) {
      if (spec.d > 1) pieces.push_back(std::make_unique<ShapePiece>(spec));
    } else if (std::get_if<NonnegativeInteractions>(&atom)) {
      auto piece = std::make_unique<NonnegPiece>();
      piece->first = spec.M;
      pieces.push_back(std::move(piece));
    }
  }
  return pieces;
}

Vector dykstra(const std::vector<std::unique_ptr<Piece>>& pieces, const Vector& x0,
               const ProjectOptions& opts) {
  if (pieces.empty()) return x0;
  if (pieces.size() == 1) {
    Vector x = x0;
    pieces[0]->project(x);
    return x;
  }
  Vector x = x0;
  std::vector<Vector> corr(pieces.size(), Vector::Zero(x0.size()));
  Vector prev(x0.size()), tmp(x0.size());
  for (int cycle = 0; cycle < opts.max_iter; ++cycle) {
    prev = x;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      tmp = x + corr[i];
      x = tmp;
      pieces[i]->project(x);
      corr[i] = tmp - x;
    }
    if ((x - prev).lpNorm<Eigen::Infinity>() < opts.tol) return x;
  }
  if (opts.throw_on_fail)
    throw std::runtime_error("project: Dykstra did not converge within max_iter");
  return x;
}

}  // namespace

Vector project_location(const FeasibleSet& set, int k, const Vector& block,
                        const ProjectOptions& opts) {
  if (block.size() != set.spec.location_block_size())
    throw std::invalid_argument("project_location: block has wrong size");
  return dykstra(build_pieces(set, k), block, opts);
}

Vector project(const FeasibleSet& set, const Vector& x, const ProjectOptions& opts) {
  const Index B = set.spec.location_block_size();
  if (x.size() != set.spec.param_count())
    throw std::invalid_argument("project: vector has wrong size");
  Vector y(x.size());
  for (int k = 0; k < set.spec.K; ++k)
    y.segment(k * B, B) = dykstra(build_pieces(set, k), x.segment(k * B, B), opts);
  return y;
}

FeasibilityReport check_feasible(const FeasibleSet& set, const Vector& beta, double tol) {
  const ModelSpec& spec = set.spec;
  if (beta.size() != spec.param_count())
    throw std::invalid_argument("check_feasible: vector has wrong size");
  FeasibilityReport report;
  for (const auto& atom : set.atoms) {
    double worst = 0.0;
    if (const auto* bp = std::get_if<BasicPolytope>(&atom)) {
      for (int k = 0; k < spec.K; ++k) {
        for (int p = 1; p <= spec.M; ++p) {
          double lhs = beta[param_index_baseline(spec, k, p)];
          for (int l = 0; l < spec.K; ++l)
            for (int s = 1; s <= spec.d; ++s) {
              double mn = std::numeric_limits<double>::infinity();
              for (int q = 0; q <= spec.M; ++q)
                mn = std::min(mn, beta[param_index_interaction(spec, k, l, s, q, p)]);
              lhs += mn;
            }
          worst = std::max(worst, bp->rho - lhs);
        }
        double upper = 0.0;
        for (int p = 1; p <= spec.M; ++p) upper += beta[param_index_baseline(spec, k, p)];
        for (int l = 0; l < spec.K; ++l)
          for (int s = 1; s <= spec.d; ++s) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int q = 0; q <= spec.M; ++q) {
              double cs = 0.0;
              for (int p = 1; p <= spec.M; ++p)
                cs += beta[param_index_interaction(spec, k, l, s, q, p)];
              mx = std::max(mx, cs);
            }
            upper += mx;
          }
        worst = std::max(worst, upper - (1.0 - bp->rho));
      }
    } else if (const auto* box = std::get_if<Box>(&atom)) {
      worst = std::max((box->lower - beta).maxCoeff(), (beta - box->upper).maxCoeff());
      worst = std::max(worst, 0.0);
    } else if (const auto* mask = std::get_if<ZeroMask>(&atom)) {
      for (Index s : mask->slots) worst = std::max(worst, std::abs(beta[s]));
    } else if (const auto* loc = std::get_if<LocalityMask>(&atom)) {
      for (int k = 0; k < spec.K; ++k)
        for (int l = 0; l < spec.K; ++l) {
          if (std::abs(k - l) <= loc->radius) continue;
          for (int s = 1; s <= spec.d; ++s)
            for (int q = 0; q <= spec.M; ++q)
              for (int p = 1; p <= spec.M; ++p)
                worst = std::max(worst,
                                 std::abs(beta[param_index_interaction(spec, k, l, s, q, p)]));
        }
    } else if (std::get_if<ShapeMonotoneConvex>(&atom)) {
      Vector curve(spec.d);
      for (int k = 0; k < spec.K; ++k)
        for (int l = 0; l < spec.K; ++l)
          for (int q = 0; q <= spec.M; ++q)
            for (int p = 1; p <= spec.M; ++p) {
              for (int s = 1; s <= spec.d; ++s)
                curve[s - 1] = beta[param_index_interaction(spec, k, l, s, q, p)];
              for (int s = 0; s + 1 < spec.d; ++s)
                worst = std::max(worst, curve[s + 1] - curve[s]);
              for (int s = 1; s + 1 < spec.d; ++s)
                worst = std::max(worst, -(curve[s - 1] - 2 * curve[s] + curve[s + 1]));
            }
    } else if (std::get_if<NonnegativeInteractions>(&atom)) {
      const Index B = spec.location_block_size();
      for (int k = 0; k < spec.K; ++k) {
        const auto seg = beta.segment(k * B + spec.M, B - spec.M);
        if (seg.size() > 0) worst = std::max(worst, -seg.minCoeff());
      }
      worst = std::max(worst, 0.0);
    }
    report.per_atom.push_back({atom_name(atom), worst});
    report.worst = std::max(report.worst, worst);
  }
  report.feasible = report.worst <= tol;
  return report;
}

}  // namespace stbp
