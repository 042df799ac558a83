#pragma once

#include <optional>
#include <variant>

#include "stbp/model.hpp"

namespace stbp {

// Constraint atoms. All act block-separably per location.

/// The feasibility polytope: per (k,p) the worst-case-over-history lower
/// bound rho <= beta_k(p) + sum_{s,l} min_q beta^s_{kl}(p,q), and per k the
/// upper bound sum_p beta_k(p) + sum_{s,l} max_q sum_p beta^s_{kl}(p,q)
/// <= 1 - rho.
struct BasicPolytope {
  double rho = 0.0;
};

struct Box {
  Vector lower, upper;  // per slot
};

struct ZeroMask {
  std::vector<Index> slots;
};

/// Zeroes interactions between locations with |k - l| > radius.
struct LocalityMask {
  int radius = 1;
};

/// For every fixed (k,l,p,q), the d-sequence s -> beta^s_{kl}(p,q) is
/// non-increasing and convex.
struct ShapeMonotoneConvex {};

struct NonnegativeInteractions {};

using ConstraintAtom = std::variant<BasicPolytope, Box, ZeroMask, LocalityMask,
                                    ShapeMonotoneConvex, NonnegativeInteractions>;

std::string atom_name(const ConstraintAtom& atom);

struct FeasibleSet {
  ModelSpec spec;
  std::vector<ConstraintAtom> atoms;

  FeasibleSet() = default;
  explicit FeasibleSet(const ModelSpec& s) : spec(s) {}
  FeasibleSet(const ModelSpec& s, std::vector<ConstraintAtom> a) : spec(s), atoms(std::move(a)) {}

  FeasibleSet& add(ConstraintAtom atom) {
    atoms.push_back(std::move(atom));
    return *this;
  }
};

/// Basic polytope plus, for M = 1, the single-state convention that the
/// ground state contributes nothing (zero-mask on beta^s_{kl}(1,0)).
FeasibleSet basic_feasible_set(const ModelSpec& spec, double rho = 0.0);

/// Slots of all beta^s_{kl}(p,0), the ground-state interaction columns.
std::vector<Index> ground_state_slots(const ModelSpec& spec);

struct AtomViolation {
  std::string atom;
  double worst = 0.0;
};

struct FeasibilityReport {
  bool feasible = true;
  double worst = 0.0;
  std::vector<AtomViolation> per_atom;
};

FeasibilityReport check_feasible(const FeasibleSet& set, const Vector& beta, double tol = 1e-8);

struct ProjectOptions {
  double tol = 1e-10;       // Dykstra cycle-displacement stop
  int max_iter = 10000;     // Dykstra cycles
  bool throw_on_fail = true;
};

/// Euclidean projection onto the intersection of the atoms, by Dykstra's
/// alternating projections over exactly-projectable constraint pieces.
Vector project(const FeasibleSet& set, const Vector& x, const ProjectOptions& opts = {});

/// Projection restricted to the location-k slice (block vector of size B).
/// All atoms act block-separably, so full projection = per-location ones.
Vector project_location(const FeasibleSet& set, int k, const Vector& block,
                        const ProjectOptions& opts = {});

/// Euclidean projection of a d-vector onto the non-increasing convex cone.
Vector shape_project(const Vector& curve);

/// Projection of v onto the scaled simplex {x >= 0, sum x = r}.
Vector simplex_project(const Vector& v, double r);

}  // namespace stbp
