#include "stbp/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stbp/io.hpp"
#include "stbp/parallel.hpp"

namespace stbp {

namespace {

using ordered_json = nlohmann::ordered_json;

double draw(std::uint64_t seed, std::uint64_t tag, std::uint64_t idx) {
  return uniform01(mix_counter(seed, tag, idx));
}

}  // namespace

std::string scenario_name(ScenarioId id) {
  switch (id) {
    case ScenarioId::SingleStateShape: return "single-shape";
    case ScenarioId::MultiStateSame: return "multi-same";
    case ScenarioId::MultiStateOrdered: return "multi-ordered";
    case ScenarioId::Network: return "network";
  }
  throw std::invalid_argument("scenario_name: unknown scenario");
}

ScenarioId scenario_from_name(const std::string& name) {
  if (name == "single-shape") return ScenarioId::SingleStateShape;
  if (name == "multi-same") return ScenarioId::MultiStateSame;
  if (name == "multi-ordered") return ScenarioId::MultiStateOrdered;
  if (name == "network") return ScenarioId::Network;
  throw std::invalid_argument("scenario_from_name: unknown scenario '" + name + "'");
}

const std::vector<std::pair<int, int>>& network_edges() {
  static const std::vector<std::pair<int, int>> edges = {
      {0, 4}, {0, 7}, {1, 1}, {1, 2}, {2, 6}, {3, 5}, {4, 4}, {5, 1}, {6, 3}, {7, 5}};
  return edges;
}

namespace {

// scale the whole block of location k so the polytope upper constraint
// holds with the given slack
void rescale_location(const ModelSpec& spec, Vector& beta, int k, double slack) {
  double total = 0.0;
  for (int p = 1; p <= spec.M; ++p) total += beta[param_index_baseline(spec, k, p)];
  for (int l = 0; l < spec.K; ++l)
    for (int s = 1; s <= spec.d; ++s) {
      double worst = 0.0;
      for (int q = 0; q <= spec.M; ++q) {
        double col = 0.0;
        for (int p = 1; p <= spec.M; ++p)
          col += beta[param_index_interaction(spec, k, l, s, q, p)];
        worst = std::max(worst, col);
      }
      total += worst;
    }
  if (total <= 0.0) return;
  const Index B = spec.location_block_size();
  beta.segment(static_cast<Index>(k) * B, B) *= (1.0 - slack) / total;
}

ParamVector generate_single_shape(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.M != 1)
    throw std::invalid_argument("generate_scenario: single-shape requires M = 1");
  ParamVector beta(spec);
  beta.values.setZero();
  std::uint64_t idx = 0;
  for (int k = 0; k < spec.K; ++k) {
    beta.values[param_index_baseline(spec, k, 1)] = 0.25 + 0.5 * draw(seed, 11, idx++);
    for (int l = 0; l < spec.K; ++l) {
      if (std::abs(k - l) > 1) continue;
      Vector curve(spec.d);
      for (int s = 0; s < spec.d; ++s) curve[s] = 0.25 * draw(seed, 12, idx++);
      curve = shape_project(curve).cwiseMax(0.0);
      for (int s = 1; s <= spec.d; ++s)
        beta.values[param_index_interaction(spec, k, l, s, 1, 1)] = curve[s - 1];
    }
    rescale_location(spec, beta.values, k, 0.05);
  }
  return beta;
}

ParamVector generate_multi(const ModelSpec& spec, std::uint64_t seed, bool ordered) {
  ParamVector beta(spec);
  beta.values.setZero();
  std::uint64_t idx = 0;
  for (int k = 0; k < spec.K; ++k) {
    for (int p = 1; p <= spec.M; ++p)
      beta.values[param_index_baseline(spec, k, p)] = 0.1 + 0.2 * draw(seed, 21, idx++);
    for (int l = 0; l < spec.K; ++l) {
      if (std::abs(k - l) > 1) continue;
      for (int q = 0; q <= spec.M; ++q)
        for (int p = 1; p <= spec.M; ++p) {
          const bool allowed = ordered ? (q >= 1 && p <= q) : (q == p);
          if (!allowed) continue;
          Vector curve(spec.d);
          for (int s = 0; s < spec.d; ++s) curve[s] = 0.2 * draw(seed, 22, idx++);
          curve = shape_project(curve).cwiseMax(0.0);
          for (int s = 1; s <= spec.d; ++s)
            beta.values[param_index_interaction(spec, k, l, s, q, p)] = curve[s - 1];
        }
    }
    rescale_location(spec, beta.values, k, 0.05);
  }
  return beta;
}

ParamVector generate_network(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.M != 1 || spec.K != 8)
    throw std::invalid_argument("generate_scenario: network scenario requires K = 8, M = 1");
  ParamVector beta(spec);
  beta.values.setZero();
  std::uint64_t idx = 0;
  for (int k = 0; k < spec.K; ++k)
    beta.values[param_index_baseline(spec, k, 1)] = 0.2 * draw(seed, 31, idx++);
  for (const auto& [from, to] : network_edges()) {
    const int tau = 1 + static_cast<int>(draw(seed, 32, idx++) * spec.d) % spec.d;
    const double sign = (from == 0 && to == 7) ? -1.0 : 1.0;
    for (int s = 1; s <= spec.d; ++s)
      beta.values[param_index_interaction(spec, to, from, s, 1, 1)] =
          sign * 0.05 * std::exp(-0.25 * (s - tau) * (s - tau));
  }
  // lift baselines so the worst-case lower constraint keeps probabilities
  // nonnegative even with the inhibiting edge active
  for (int k = 0; k < spec.K; ++k) {
    double low = 0.0;
    for (int l = 0; l < spec.K; ++l)
      for (int s = 1; s <= spec.d; ++s)
        low += std::min(0.0, beta.values[param_index_interaction(spec, k, l, s, 1, 1)]);
    double& base = beta.values[param_index_baseline(spec, k, 1)];
    base = std::max(base, -low + 0.01);
  }
  return beta;
}

}  // namespace

ParamVector generate_scenario(ScenarioId id, const ModelSpec& spec, std::uint64_t seed) {
  ParamVector beta = [&] {
    switch (id) {
      case ScenarioId::SingleStateShape: return generate_single_shape(spec, seed);
      case ScenarioId::MultiStateSame: return generate_multi(spec, seed, false);
      case ScenarioId::MultiStateOrdered: return generate_multi(spec, seed, true);
      case ScenarioId::Network: return generate_network(spec, seed);
    }
    throw std::invalid_argument("generate_scenario: unknown scenario");
  }();
  FeasibilityReport rep = check_feasible(FeasibleSet(spec, {BasicPolytope{0.0}}), beta.values);
  if (!rep.feasible)
    throw std::logic_error("generate_scenario: generated parameters infeasible, violation " +
                           std::to_string(rep.worst));
  return beta;
}

FeasibleSet scenario_estimation_set(const ExperimentConfig& config, double rho) {
  const ModelSpec& spec = config.spec;
  FeasibleSet set = basic_feasible_set(spec, rho);
  if (config.scenario == ScenarioId::Network && config.known_graph) {
    std::vector<std::uint8_t> adj(static_cast<std::size_t>(spec.K) * spec.K, 0);
    for (const auto& [from, to] : network_edges()) adj[to * spec.K + from] = 1;
    std::vector<Index> slots;
    for (int k = 0; k < spec.K; ++k)
      for (int l = 0; l < spec.K; ++l) {
        if (adj[k * spec.K + l]) continue;
        for (int s = 1; s <= spec.d; ++s)
          for (int q = 1; q <= spec.M; ++q)
            for (int p = 1; p <= spec.M; ++p)
              slots.push_back(param_index_interaction(spec, k, l, s, q, p));
      }
    set.add(ZeroMask{std::move(slots)});
  }
  if (config.informed &&
      (config.scenario == ScenarioId::MultiStateSame ||
       config.scenario == ScenarioId::MultiStateOrdered)) {
    const bool ordered = config.scenario == ScenarioId::MultiStateOrdered;
    std::vector<Index> slots;
    for (int k = 0; k < spec.K; ++k)
      for (int l = 0; l < spec.K; ++l)
        for (int s = 1; s <= spec.d; ++s)
          for (int q = 0; q <= spec.M; ++q)
            for (int p = 1; p <= spec.M; ++p) {
              const bool allowed = ordered ? (q >= 1 && p <= q) : (q == p);
              const bool local = std::abs(k - l) <= 1;
              if (!(allowed && local))
                slots.push_back(param_index_interaction(spec, k, l, s, q, p));
            }
    set.add(ZeroMask{std::move(slots)});
    set.add(NonnegativeInteractions{});
    set.add(ShapeMonotoneConvex{});
  }
  if (config.informed && config.scenario == ScenarioId::SingleStateShape) {
    std::vector<Index> slots;
    for (int k = 0; k < spec.K; ++k)
      for (int l = 0; l < spec.K; ++l) {
        if (std::abs(k - l) <= 1) continue;
        for (int s = 1; s <= spec.d; ++s)
          slots.push_back(param_index_interaction(spec, k, l, s, 1, 1));
      }
    set.add(ZeroMask{std::move(slots)});
    set.add(NonnegativeInteractions{});
    set.add(ShapeMonotoneConvex{});
  }
  return set;
}

ErrorRow error_row(const Vector& estimate, const Vector& truth) {
  ErrorRow row;
  const Vector diff = estimate - truth;
  row.l1 = diff.lpNorm<1>();
  row.l2 = diff.norm();
  row.linf = diff.lpNorm<Eigen::Infinity>();
  const double n1 = truth.lpNorm<1>(), n2 = truth.norm(), ni = truth.lpNorm<Eigen::Infinity>();
  row.rel_l1 = n1 > 0 ? row.l1 / n1 : 0.0;
  row.rel_l2 = n2 > 0 ? row.l2 / n2 : 0.0;
  row.rel_linf = ni > 0 ? row.linf / ni : 0.0;
  return row;
}

void split_birth_inter(const ModelSpec& spec, const Vector& beta, Vector& birth, Vector& inter) {
  birth.resize(static_cast<Index>(spec.K) * spec.M);
  inter.resize(spec.param_count() - birth.size());
  Index bi = 0, ii = 0;
  const Index B = spec.location_block_size();
  for (int k = 0; k < spec.K; ++k)
    for (Index off = 0; off < B; ++off) {
      const Index flat = static_cast<Index>(k) * B + off;
      if (off < spec.M)
        birth[bi++] = beta[flat];
      else
        inter[ii++] = beta[flat];
    }
}

double largest_gap_threshold(std::vector<double> values) {
  if (values.size() < 2) return values.empty() ? 0.0 : values.front();
  std::sort(values.begin(), values.end());
  double best = 0.0, thr = values.front();
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double gap = values[i] - values[i - 1];
    if (gap > best) {
      best = gap;
      thr = 0.5 * (values[i] + values[i - 1]);
    }
  }
  return thr;
}

namespace {

EstimateResult run_estimator(const std::string& name, const EventPanel& panel,
                             const ExperimentConfig& config) {
  SolveOptions options = config.solver;
  options.rho = config.rho;
  if (name == "ls") return estimate_ls(panel, scenario_estimation_set(config, 0.0), options);
  if (name == "ml") return estimate_ml(panel, scenario_estimation_set(config, config.rho), options);
  if (name == "vi")
    return estimate_vi(panel, config.spec.link, scenario_estimation_set(config, 0.0), options);
  throw std::invalid_argument("run_experiment: unknown estimator '" + name + "'");
}

}  // namespace

ReportBundle run_experiment(const ExperimentConfig& config) {
  const ModelSpec& spec = config.spec;
  ReportBundle bundle;
  bundle.config = config;
  const int R = config.replications;
  const int E = static_cast<int>(config.estimators.size());
  bundle.rows.resize(static_cast<std::size_t>(R) * E);

  std::vector<std::uint8_t> adjacency;
  if (config.scenario == ScenarioId::Network) {
    adjacency.assign(static_cast<std::size_t>(spec.K) * spec.K, 0);
    for (const auto& [from, to] : network_edges()) adjacency[to * spec.K + from] = 1;
  }

  parallel_for(
      R,
      [&](int r) {
        const std::uint64_t rep_seed = mix_counter(config.seed, 0x5eed, r);
        ParamVector truth = generate_scenario(config.scenario, spec, rep_seed);
        SimConfig sim;
        sim.N = static_cast<int>(config.N);
        sim.seed = mix_counter(rep_seed, 0x51, 0);
        EventPanel panel = simulate(spec, truth, sim);
        for (int e = 0; e < E; ++e) {
          ReplicationResult& row = bundle.rows[static_cast<std::size_t>(r) * E + e];
          row.replication = r;
          row.estimator = config.estimators[e];
          try {
            EstimateResult fit = run_estimator(config.estimators[e], panel, config);
            row.full = error_row(fit.beta_hat.values, truth.values);
            Vector bh, ih, bt, it;
            split_birth_inter(spec, fit.beta_hat.values, bh, ih);
            split_birth_inter(spec, truth.values, bt, it);
            row.birth = error_row(bh, bt);
            row.inter = error_row(ih, it);
            if (config.scenario == ScenarioId::Network) {
              row.true_edges = adjacency;
              row.pair_max_interaction.assign(static_cast<std::size_t>(spec.K) * spec.K, 0.0);
              for (int k = 0; k < spec.K; ++k)
                for (int l = 0; l < spec.K; ++l) {
                  double peak = 0.0;
                  for (int s = 1; s <= spec.d; ++s)
                    peak = std::max(peak, std::abs(fit.beta_hat.values[param_index_interaction(
                                              spec, k, l, s, 1, 1)]));
                  row.pair_max_interaction[k * spec.K + l] = peak;
                }
            }
          } catch (const std::exception& ex) {
            row.failed = true;
            row.error = ex.what();
          }
        }
      },
      config.solver.threads);

  for (int e = 0; e < E; ++e) {
    ErrorRow mf, mb, mi;
    int count = 0;
    for (int r = 0; r < R; ++r) {
      const ReplicationResult& row = bundle.rows[static_cast<std::size_t>(r) * E + e];
      if (row.failed) continue;
      ++count;
      auto acc = [](ErrorRow& m, const ErrorRow& x) {
        m.l1 += x.l1;
        m.l2 += x.l2;
        m.linf += x.linf;
        m.rel_l1 += x.rel_l1;
        m.rel_l2 += x.rel_l2;
        m.rel_linf += x.rel_linf;
      };
      acc(mf, row.full);
      acc(mb, row.birth);
      acc(mi, row.inter);
    }
    auto norm = [&](ErrorRow& m) {
      if (count == 0) return;
      m.l1 /= count;
      m.l2 /= count;
      m.linf /= count;
      m.rel_l1 /= count;
      m.rel_l2 /= count;
      m.rel_linf /= count;
    };
    norm(mf);
    norm(mb);
    norm(mi);
    bundle.mean_full.push_back(mf);
    bundle.mean_birth.push_back(mb);
    bundle.mean_inter.push_back(mi);
  }
  return bundle;
}

namespace {

ordered_json config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["schema_version"] = 1;
  j["scenario"] = scenario_name(c.scenario);
  j["K"] = c.spec.K;
  j["M"] = c.spec.M;
  j["d"] = c.spec.d;
  j["link"] = link_name(c.spec.link);
  j["N"] = c.N;
  j["replications"] = c.replications;
  j["seed"] = c.seed;
  j["estimators"] = c.estimators;
  j["known_graph"] = c.known_graph;
  j["informed"] = c.informed;
  j["rho"] = c.rho;
  j["output_dir"] = c.output_dir;
  return j;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

ordered_json error_to_json(const ErrorRow& r) {
  ordered_json j;
  j["l1"] = r.l1;
  j["l2"] = r.l2;
  j["linf"] = r.linf;
  j["rel_l1"] = r.rel_l1;
  j["rel_l2"] = r.rel_l2;
  j["rel_linf"] = r.rel_linf;
  return j;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_experiment_config: cannot open " + path);
  ordered_json j = ordered_json::parse(is);
  if (j.value("schema_version", 0) != 1)
    throw std::runtime_error("load_experiment_config: unsupported schema_version in " + path);
  ExperimentConfig c;
  c.scenario = scenario_from_name(j.at("scenario").get<std::string>());
  c.spec = ModelSpec(j.at("K").get<int>(), j.at("M").get<int>(), j.at("d").get<int>(),
                     link_from_name(j.value("link", std::string("identity"))));
  c.N = j.at("N").get<Index>();
  c.replications = j.at("replications").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("estimators")) c.estimators = j["estimators"].get<std::vector<std::string>>();
  c.known_graph = j.value("known_graph", false);
  c.informed = j.value("informed", false);
  c.rho = j.value("rho", 1e-4);
  c.output_dir = j.value("output_dir", std::string("."));
  return c;
}

void save_experiment_config(const ExperimentConfig& config, const std::string& path) {
  write_text_file(path, config_to_json(config).dump(2) + "\n");
}

void emit_report(const ReportBundle& bundle, const std::string& format, bool figures) {
  namespace fs = std::filesystem;
  const fs::path dir(bundle.config.output_dir);
  fs::create_directories(dir);

  if (format == "json") {
    ordered_json j;
    j["schema_version"] = 1;
    j["config"] = config_to_json(bundle.config);
    // the destination directory is a runtime detail, not part of the result
    j["config"].erase("output_dir");
    j["replications"] = ordered_json::array();
    for (const ReplicationResult& row : bundle.rows) {
      ordered_json r;
      r["replication"] = row.replication;
      r["estimator"] = row.estimator;
      r["failed"] = row.failed;
      if (row.failed)
        r["error"] = row.error;
      else {
        r["full"] = error_to_json(row.full);
        r["birth"] = error_to_json(row.birth);
        r["inter"] = error_to_json(row.inter);
        if (!row.pair_max_interaction.empty())
          r["pair_max_interaction"] = row.pair_max_interaction;
      }
      j["replications"].push_back(r);
    }
    j["mean"] = ordered_json::array();
    for (std::size_t e = 0; e < bundle.config.estimators.size(); ++e) {
      ordered_json m;
      m["estimator"] = bundle.config.estimators[e];
      m["full"] = error_to_json(bundle.mean_full[e]);
      m["birth"] = error_to_json(bundle.mean_birth[e]);
      m["inter"] = error_to_json(bundle.mean_inter[e]);
      j["mean"].push_back(m);
    }
    write_text_file((dir / "report.json").string(), j.dump(2) + "\n");
  } else if (format == "csv") {
    std::ostringstream os;
    os << "replication,estimator,family,l1,l2,linf,rel_l1,rel_l2,rel_linf,failed\n";
    auto line = [&](int rep, const std::string& est, const char* fam, const ErrorRow& r,
                    bool failed) {
      os << rep << "," << est << "," << fam << "," << num(r.l1) << "," << num(r.l2) << ","
         << num(r.linf) << "," << num(r.rel_l1) << "," << num(r.rel_l2) << "," << num(r.rel_linf)
         << "," << (failed ? 1 : 0) << "\n";
    };
    for (const ReplicationResult& row : bundle.rows) {
      line(row.replication, row.estimator, "full", row.full, row.failed);
      line(row.replication, row.estimator, "birth", row.birth, row.failed);
      line(row.replication, row.estimator, "inter", row.inter, row.failed);
    }
    for (std::size_t e = 0; e < bundle.config.estimators.size(); ++e) {
      line(-1, bundle.config.estimators[e], "mean_full", bundle.mean_full[e], false);
      line(-1, bundle.config.estimators[e], "mean_birth", bundle.mean_birth[e], false);
      line(-1, bundle.config.estimators[e], "mean_inter", bundle.mean_inter[e], false);
    }
    write_text_file((dir / "report.csv").string(), os.str());
  } else {
    throw std::invalid_argument("emit_report: format must be csv or json");
  }

  if (figures) {
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (std::size_t e = 0; e < bundle.config.estimators.size(); ++e) {
      std::vector<double> ys;
      for (const ReplicationResult& row : bundle.rows)
        if (!row.failed && row.estimator == bundle.config.estimators[e])
          ys.push_back(row.full.rel_l2);
      series.emplace_back(bundle.config.estimators[e], std::move(ys));
    }
    write_text_file((dir / "relative_l2_by_replication.svg").string(),
                    svg_line_chart(series, "relative l2 error per replication"));
    if (bundle.config.scenario == ScenarioId::Network) {
      std::vector<double> peaks;
      for (const ReplicationResult& row : bundle.rows)
        peaks.insert(peaks.end(), row.pair_max_interaction.begin(),
                     row.pair_max_interaction.end());
      write_text_file((dir / "support_histogram.svg").string(),
                      svg_histogram(peaks, 40, "peak |interaction| per location pair", 0.03));
    }
  }
}

DepthChoice cross_validate_depth(const EventPanel& panel, const std::vector<int>& candidates,
                                 const std::string& estimator, double split_fraction,
                                 std::uint64_t seed) {
  if (candidates.empty()) throw std::invalid_argument("cross_validate_depth: no candidates");
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw std::invalid_argument("cross_validate_depth: split_fraction must lie in (0,1)");
  const ModelSpec& spec = panel.spec;
  const int train_N = std::max(1, static_cast<int>(panel.N * split_fraction));
  const int test_N = panel.N - train_N;
  if (test_N < 1) throw std::invalid_argument("cross_validate_depth: held-out part is empty");

  // held-out frequencies, independent of candidate depth
  EventPanel test_panel(ModelSpec(spec.K, spec.M, 0, spec.link),
                        panel.omega.bottomRows(test_N));
  const Matrix test_freq = frequency_report(test_panel);

  DepthChoice choice;
  choice.chosen = candidates.front();
  double best = std::numeric_limits<double>::infinity();
  for (int dc : candidates) {
    if (dc < 0 || dc > spec.d + train_N - 1)
      throw std::invalid_argument("cross_validate_depth: candidate depth out of range");
    ModelSpec cspec(spec.K, spec.M, dc, spec.link);
    // training block: all leading rows before the held-out part; the first
    // dc of them serve as history (borrowed from outcomes when dc > spec.d)
    EventPanel train(cspec, panel.omega.topRows(spec.d + train_N));
    double score;
    try {
      SolveOptions options;
      EstimateResult fit = estimator == "ml"
                               ? estimate_ml(train, basic_feasible_set(cspec, 1e-4), options)
                               : estimate_ls(train, basic_feasible_set(cspec, 0.0), options);
      SimConfig sim;
      sim.N = test_N;
      sim.seed = mix_counter(seed, 0xcd, static_cast<std::uint64_t>(dc));
      if (dc > 0) sim.initial_window = train.omega.bottomRows(dc);
      EventPanel synthetic = simulate(cspec, fit.beta_hat, sim);
      score = (frequency_report(synthetic) - test_freq).cwiseAbs().sum();
    } catch (const std::exception&) {
      choice.failed.push_back(dc);
      score = std::numeric_limits<double>::infinity();
    }
    choice.scores.emplace_back(dc, score);
    if (score < best || (score == best && dc < choice.chosen)) {
      best = score;
      choice.chosen = dc;
    }
  }
  return choice;
}

}  // namespace stbp
