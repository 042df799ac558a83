#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "stbp/experiment.hpp"
#include "stbp/io.hpp"

using namespace stbp;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("scenario names round-trip") {
  for (ScenarioId id : {ScenarioId::SingleStateShape, ScenarioId::MultiStateSame,
                        ScenarioId::MultiStateOrdered, ScenarioId::Network})
    CHECK(scenario_from_name(scenario_name(id)) == id);
  CHECK_THROWS_AS(scenario_from_name("bogus"), std::invalid_argument);
}

TEST_CASE("generated parameters are feasible and honor scenario structure") {
  for (std::uint64_t seed : {1ULL, 7ULL, 99ULL}) {
    // single-state shape scenario: local, nonnegative, non-increasing convex
    {
      ModelSpec spec(5, 1, 4);
      ParamVector beta = generate_scenario(ScenarioId::SingleStateShape, spec, seed);
      CHECK(check_feasible(basic_feasible_set(spec, 0.0), beta.values).feasible);
      for (int k = 0; k < spec.K; ++k)
        for (int l = 0; l < spec.K; ++l)
          for (int s = 1; s <= spec.d; ++s) {
            const double v = beta.values[param_index(spec, k, l, s, 1, 1)];
            if (std::abs(k - l) > 1) CHECK(v == 0.0);
            CHECK(v >= 0.0);
            if (std::abs(k - l) <= 1 && s < spec.d)
              CHECK(beta.values[param_index(spec, k, l, s + 1, 1, 1)] <= v + 1e-9);
          }
    }
    // multi-state scenarios: local interactions with allowed (p, q) patterns
    for (ScenarioId id : {ScenarioId::MultiStateSame, ScenarioId::MultiStateOrdered}) {
      ModelSpec spec(3, 2, 3);
      ParamVector beta = generate_scenario(id, spec, seed);
      CHECK(check_feasible(basic_feasible_set(spec, 0.0), beta.values).feasible);
      for (int k = 0; k < spec.K; ++k)
        for (int l = 0; l < spec.K; ++l)
          for (int s = 1; s <= spec.d; ++s)
            for (int q = 0; q <= spec.M; ++q)
              for (int p = 1; p <= spec.M; ++p) {
                const double v = beta.values[param_index(spec, k, l, s, q, p)];
                const bool allowed =
                    std::abs(k - l) <= 1 && q >= 1 &&
                    (id == ScenarioId::MultiStateSame ? q == p : p <= q);
                if (!allowed) CHECK(v == 0.0);
              }
    }
    // network scenario: support exactly on the built-in edge list
    {
      ModelSpec spec(8, 1, 4);
      ParamVector beta = generate_scenario(ScenarioId::Network, spec, seed);
      CHECK(check_feasible(basic_feasible_set(spec, 0.0), beta.values).feasible);
      std::set<std::pair<int, int>> edges(network_edges().begin(), network_edges().end());
      CHECK(edges.size() == 10);
      CHECK(edges.count({0, 7}) == 1);
      CHECK(edges.count({0, 5}) == 0);
      CHECK(edges.count({1, 7}) == 0);
      for (int from = 0; from < spec.K; ++from)
        for (int to = 0; to < spec.K; ++to) {
          double peak = 0.0;
          bool negative = false;
          for (int s = 1; s <= spec.d; ++s) {
            const double v = beta.values[param_index(spec, to, from, s, 1, 1)];
            peak = std::max(peak, std::abs(v));
            if (v < 0.0) negative = true;
          }
          if (edges.count({from, to}))
            CHECK(peak > 1e-4);
          else
            CHECK(peak == 0.0);
          if (negative) CHECK((from == 0 && to == 7));
        }
    }
  }
}

TEST_CASE("scenario generation is seed-deterministic") {
  ModelSpec spec(4, 1, 3);
  ParamVector a = generate_scenario(ScenarioId::SingleStateShape, spec, 5);
  ParamVector b = generate_scenario(ScenarioId::SingleStateShape, spec, 5);
  ParamVector c = generate_scenario(ScenarioId::SingleStateShape, spec, 6);
  CHECK((a.values - b.values).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.values - c.values).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("error rows and the birth/interaction split are exact") {
  ModelSpec spec(2, 1, 1);
  Vector truth = Vector::Zero(spec.param_count());
  truth[param_index(spec, 0, 1)] = 0.4;
  truth[param_index(spec, 0, 0, 1, 1, 1)] = 0.2;
  Vector est = truth;
  est[param_index(spec, 0, 1)] += 0.1;
  est[param_index(spec, 0, 0, 1, 1, 1)] -= 0.05;
  ErrorRow row = error_row(est, truth);
  CHECK(row.l1 == doctest::Approx(0.15));
  CHECK(row.l2 == doctest::Approx(std::sqrt(0.01 + 0.0025)));
  CHECK(row.linf == doctest::Approx(0.1));
  CHECK(row.rel_l1 == doctest::Approx(0.15 / 0.6));
  CHECK(row.rel_linf == doctest::Approx(0.1 / 0.4));

  Vector birth, inter;
  split_birth_inter(spec, truth, birth, inter);
  CHECK(birth.size() == 2);
  CHECK(inter.size() == spec.param_count() - 2);
  CHECK(birth[0] == doctest::Approx(0.4));
  CHECK(inter.sum() == doctest::Approx(0.2));
}

TEST_CASE("largest-gap threshold splits bimodal magnitudes") {
  CHECK(largest_gap_threshold({0.01, 0.02, 0.35, 0.4, 0.03}) == doctest::Approx(0.19));
  CHECK(largest_gap_threshold({0.5, 0.1}) == doctest::Approx(0.3));
  CHECK(largest_gap_threshold({0.7}) == doctest::Approx(0.7));
  CHECK(largest_gap_threshold({}) == doctest::Approx(0.0));
}

TEST_CASE("experiment configs round-trip through JSON") {
  ExperimentConfig config;
  config.scenario = ScenarioId::MultiStateOrdered;
  config.spec = ModelSpec(3, 2, 4);
  config.N = 777;
  config.replications = 3;
  config.seed = 123456789ULL;
  config.estimators = {"ml"};
  config.informed = true;
  config.rho = 5e-4;
  const std::string path = "/tmp/stbp_test_experiment_config.json";
  save_experiment_config(config, path);
  ExperimentConfig back = load_experiment_config(path);
  std::remove(path.c_str());
  CHECK(back.scenario == config.scenario);
  CHECK(back.spec == config.spec);
  CHECK(back.N == config.N);
  CHECK(back.replications == config.replications);
  CHECK(back.seed == config.seed);
  CHECK(back.estimators == config.estimators);
  CHECK(back.informed == config.informed);
  CHECK(back.rho == doctest::Approx(config.rho));
}

TEST_CASE("a small experiment runs, averages errors, and reports deterministically") {
  ExperimentConfig config;
  config.scenario = ScenarioId::SingleStateShape;
  config.spec = ModelSpec(3, 1, 2);
  config.N = 800;
  config.replications = 2;
  config.seed = 99;
  config.estimators = {"ls"};
  config.output_dir = "/tmp/stbp_test_report_a";
  ReportBundle bundle = run_experiment(config);
  REQUIRE(bundle.rows.size() == 2);
  for (const ReplicationResult& row : bundle.rows) {
    CHECK(!row.failed);
    CHECK(row.full.rel_l2 > 0.0);
    CHECK(row.full.rel_l2 < 1.5);
  }
  REQUIRE(bundle.mean_full.size() == 1);
  CHECK(bundle.mean_full[0].rel_l2 ==
        doctest::Approx(0.5 * (bundle.rows[0].full.rel_l2 + bundle.rows[1].full.rel_l2)));

  emit_report(bundle, "json", true);
  config.output_dir = "/tmp/stbp_test_report_b";
  ReportBundle again = run_experiment(config);
  emit_report(again, "json", true);
  const std::string a = slurp("/tmp/stbp_test_report_a/report.json");
  const std::string b = slurp("/tmp/stbp_test_report_b/report.json");
  CHECK(a == b);
  CHECK(!slurp("/tmp/stbp_test_report_a/relative_l2_by_replication.svg").empty());

  // the CSV flavor emits parseable rows
  emit_report(bundle, "csv", false);
  const std::string csv = slurp("/tmp/stbp_test_report_a/report.csv");
  CHECK(csv.find("rel_l2") != std::string::npos);

  // estimator failures are recorded, not thrown
  ExperimentConfig doomed = config;
  doomed.estimators = {"nonsense"};
  ReportBundle bad = run_experiment(doomed);
  CHECK(bad.rows[0].failed);
  CHECK(!bad.rows[0].error.empty());
}

TEST_CASE("network replications expose edge scores and the true adjacency") {
  ExperimentConfig config;
  config.scenario = ScenarioId::Network;
  config.spec = ModelSpec(8, 1, 3);
  config.N = 1500;
  config.replications = 1;
  config.seed = 4;
  config.estimators = {"ls"};
  ReportBundle bundle = run_experiment(config);
  const ReplicationResult& row = bundle.rows[0];
  REQUIRE(!row.failed);
  REQUIRE(row.pair_max_interaction.size() == 64);
  REQUIRE(row.true_edges.size() == 64);
  int edge_count = 0;
  for (std::uint8_t e : row.true_edges) edge_count += e;
  CHECK(edge_count == 10);

  config.output_dir = "/tmp/stbp_test_report_net";
  ReportBundle named = bundle;
  named.config = config;
  emit_report(named, "json", true);
  CHECK(!slurp("/tmp/stbp_test_report_net/support_histogram.svg").empty());
}

TEST_CASE("depth selection scores candidates and is reproducible") {
  ModelSpec spec(2, 1, 0);
  ParamVector beta(spec);
  beta.values << 0.3, 0.15;
  SimConfig sim;
  sim.N = 3000;
  sim.seed = 77;
  EventPanel panel = simulate(spec, beta, sim);
  // a single candidate is chosen unconditionally
  DepthChoice lone = cross_validate_depth(panel, {2}, "ls", 0.5, 9);
  CHECK(lone.chosen == 2);
  REQUIRE(lone.scores.size() == 1);
  CHECK(std::isfinite(lone.scores[0].second));

  DepthChoice a = cross_validate_depth(panel, {0, 1, 2, 4}, "ls", 0.5, 123);
  DepthChoice b = cross_validate_depth(panel, {0, 1, 2, 4}, "ls", 0.5, 123);
  REQUIRE(a.scores.size() == 4);
  CHECK(a.chosen == b.chosen);
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    CHECK(a.scores[i].first == b.scores[i].first);
    CHECK(a.scores[i].second == doctest::Approx(b.scores[i].second));
    CHECK(std::isfinite(a.scores[i].second));
  }
  CHECK(a.failed.empty());
  // the winner attains the best score, smallest depth breaking ties
  for (const auto& [dc, score] : a.scores) {
    double chosen_score = 0.0;
    for (const auto& [dc2, s2] : a.scores)
      if (dc2 == a.chosen) chosen_score = s2;
    CHECK(chosen_score <= score + 1e-15);
  }

  CHECK_THROWS_AS(cross_validate_depth(panel, {}, "ls", 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(cross_validate_depth(panel, {1}, "ls", 1.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(cross_validate_depth(panel, {100000}, "ls", 0.5, 1), std::invalid_argument);
}
