#pragma once

#include <string>
#include <vector>

#include "stbp/constraints.hpp"
#include "stbp/estimate.hpp"
#include "stbp/simulate.hpp"

namespace stbp {

enum class ScenarioId {
  SingleStateShape,   // local, shape-constrained nonnegative interactions
  MultiStateSame,     // events trigger only their own category
  MultiStateOrdered,  // category q triggers only categories p <= q
  Network             // sparse directed graph with one negative edge
};

std::string scenario_name(ScenarioId id);
ScenarioId scenario_from_name(const std::string& name);

/// Directed edges (from, to), 0-based, of the built-in 8-node graph; the
/// edge 0 -> 7 carries the negated interaction curve.
const std::vector<std::pair<int, int>>& network_edges();

struct ExperimentConfig {
  ScenarioId scenario = ScenarioId::SingleStateShape;
  ModelSpec spec{1, 1, 1, Link::Identity};
  Index N = 1000;
  int replications = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> estimators{"ls", "ml"};
  bool known_graph = false;  // network scenario: mask non-edges during estimation
  bool informed = false;     // impose the scenario's structural zeros during estimation
  double rho = 1e-4;         // ML polytope strengthening
  std::string output_dir = ".";
  SolveOptions solver;
};

ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& config, const std::string& path);

/// Draws true parameters for the scenario; always feasible for the basic
/// polytope at rho = 0.
ParamVector generate_scenario(ScenarioId id, const ModelSpec& spec, std::uint64_t seed);

/// Constraint set used by the estimators for this scenario/config; rho > 0
/// strengthens the polytope (needed by the ML estimator).
FeasibleSet scenario_estimation_set(const ExperimentConfig& config, double rho = 0.0);

struct ErrorRow {
  double l1 = 0.0, l2 = 0.0, linf = 0.0;
  double rel_l1 = 0.0, rel_l2 = 0.0, rel_linf = 0.0;
};

ErrorRow error_row(const Vector& estimate, const Vector& truth);

/// Splits a flat parameter vector into baseline and interaction coordinates.
void split_birth_inter(const ModelSpec& spec, const Vector& beta, Vector& birth, Vector& inter);

struct ReplicationResult {
  int replication = 0;
  std::string estimator;
  bool failed = false;
  std::string error;
  ErrorRow full, birth, inter;
  std::vector<double> pair_max_interaction;  // max_s |beta_hat^s_{kl}|, network scenario
  std::vector<std::uint8_t> true_edges;      // K*K row-major adjacency, network scenario
};

struct ReportBundle {
  ExperimentConfig config;
  std::vector<ReplicationResult> rows;
  // one averaged ErrorRow triple per estimator, in config order
  std::vector<ErrorRow> mean_full, mean_birth, mean_inter;
};

ReportBundle run_experiment(const ExperimentConfig& config);

void emit_report(const ReportBundle& bundle, const std::string& format, bool figures);

/// Largest-gap threshold over sorted values; returns the midpoint of the
/// widest gap between consecutive order statistics.
double largest_gap_threshold(std::vector<double> values);

struct DepthChoice {
  int chosen = 0;
  std::vector<std::pair<int, double>> scores;  // (depth, held-out frequency l1 distance)
  std::vector<int> failed;
};

DepthChoice cross_validate_depth(const EventPanel& panel, const std::vector<int>& candidates,
                                 const std::string& estimator, double split_fraction,
                                 std::uint64_t seed);

}  // namespace stbp
