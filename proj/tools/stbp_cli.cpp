#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stbp/estimate.hpp"
#include "stbp/experiment.hpp"
#include "stbp/io.hpp"
#include "stbp/simulate.hpp"
#include "stbp/uncertainty.hpp"

using ordered_json = nlohmann::ordered_json;

namespace {

stbp::FeasibleSet estimation_set(const stbp::ModelSpec& spec, double rho) {
  return stbp::basic_feasible_set(spec, rho);
}

// Gram restricted to identifiable feature columns (drops the redundant
// ground-state columns in the single-state convention).
stbp::Matrix reduced_gram(const stbp::SuffStats& stats) {
  const stbp::ModelSpec& spec = stats.spec;
  if (spec.M != 1) return stats.gram;
  std::vector<stbp::Index> keep{0};
  for (int l = 0; l < spec.K; ++l)
    for (int s = 1; s <= spec.d; ++s) keep.push_back(stbp::feature_index(spec, l, s, 1));
  stbp::Matrix A(keep.size(), keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (std::size_t j = 0; j < keep.size(); ++j) A(i, j) = stats.gram(keep[i], keep[j]);
  return A;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatio-temporal Bernoulli process simulation, estimation, and inference"};
  app.require_subcommand(1);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "simulate a panel from stored parameters");
  std::string sim_params, sim_out;
  int sim_N = 1000;
  std::uint64_t sim_seed = 0;
  sim_cmd->add_option("--params", sim_params, "parameter JSON file")->required();
  sim_cmd->add_option("--length", sim_N, "number of time steps")->required();
  sim_cmd->add_option("--seed", sim_seed, "simulation seed")->required();
  sim_cmd->add_option("--out", sim_out, "output panel path")->required();

  // estimate
  auto* est_cmd = app.add_subcommand("estimate", "fit parameters to a panel");
  std::string est_panel, est_out, est_name = "ls", est_link = "identity";
  double est_rho = 1e-4;
  int est_threads = 0;
  est_cmd->add_option("--panel", est_panel, "panel file")->required();
  est_cmd->add_option("--estimator", est_name, "ls | ml | vi | ml-logistic");
  est_cmd->add_option("--link", est_link, "identity | sigmoid | logistic");
  est_cmd->add_option("--rho", est_rho, "polytope strengthening for ml");
  est_cmd->add_option("--threads", est_threads, "worker threads (0 = auto)");
  est_cmd->add_option("--out", est_out, "output parameter JSON")->required();

  // bounds
  auto* bnd_cmd = app.add_subcommand("bounds", "deviation and risk bounds for a panel");
  std::string bnd_panel, bnd_p = "inf";
  double bnd_eps = 0.1;
  bnd_cmd->add_option("--panel", bnd_panel, "panel file")->required();
  bnd_cmd->add_option("--epsilon", bnd_eps, "confidence parameter in (0,1)");
  bnd_cmd->add_option("--norm", bnd_p, "risk norm: 1 | 2 | inf");

  // confint
  auto* ci_cmd = app.add_subcommand("confint", "confidence intervals for coordinate functionals");
  std::string ci_panel;
  double ci_cov = 0.9, ci_y = 0.0;
  std::vector<stbp::Index> ci_coords;
  int ci_threads = 0;
  ci_cmd->add_option("--panel", ci_panel, "panel file")->required();
  ci_cmd->add_option("--coverage", ci_cov, "target simultaneous coverage");
  ci_cmd->add_option("--band-parameter", ci_y, "band parameter y (> 1 overrides --coverage)");
  ci_cmd->add_option("--coordinate", ci_coords, "flat coordinate indices (default: all)");
  ci_cmd->add_option("--threads", ci_threads, "worker threads (0 = auto)");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "run a scenario experiment from a config file");
  std::string exp_config, exp_format = "json";
  bool exp_figures = false;
  exp_cmd->add_option("--config", exp_config, "experiment config JSON")->required();
  exp_cmd->add_option("--format", exp_format, "report format: csv | json");
  exp_cmd->add_flag("--figures", exp_figures, "also emit SVG figures");

  // ingest
  auto* ing_cmd = app.add_subcommand("ingest", "bin an event CSV onto a grid");
  std::string ing_csv, ing_out;
  double lat_min = 0, lat_max = 1, lon_min = 0, lon_max = 1, bin_seconds = 14400;
  int ing_rows = 4, ing_cols = 4, ing_d = 6;
  std::vector<std::string> ing_cats;
  ing_cmd->add_option("--csv", ing_csv, "input CSV (timestamp,lat,lon,category)")->required();
  ing_cmd->add_option("--lat-min", lat_min, "bounding box south edge");
  ing_cmd->add_option("--lat-max", lat_max, "bounding box north edge");
  ing_cmd->add_option("--lon-min", lon_min, "bounding box west edge");
  ing_cmd->add_option("--lon-max", lon_max, "bounding box east edge");
  ing_cmd->add_option("--rows", ing_rows, "grid rows");
  ing_cmd->add_option("--cols", ing_cols, "grid cols");
  ing_cmd->add_option("--bin-seconds", bin_seconds, "time bin width in seconds");
  ing_cmd->add_option("--category", ing_cats, "category mapping name=id (repeatable)")->required();
  ing_cmd->add_option("--depth", ing_d, "memory depth of the resulting panel");
  ing_cmd->add_option("--out", ing_out, "output panel path")->required();

  // cvdepth
  auto* cv_cmd = app.add_subcommand("cvdepth", "choose memory depth by held-out frequencies");
  std::string cv_panel, cv_est = "ls";
  std::vector<int> cv_cands;
  double cv_split = 0.5;
  std::uint64_t cv_seed = 0;
  cv_cmd->add_option("--panel", cv_panel, "panel file")->required();
  cv_cmd->add_option("--candidates", cv_cands, "candidate depths")->required();
  cv_cmd->add_option("--estimator", cv_est, "ls | ml");
  cv_cmd->add_option("--split", cv_split, "training fraction in (0,1)");
  cv_cmd->add_option("--seed", cv_seed, "seed for the synthetic scoring sequence")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim_cmd) {
      stbp::ParamVector beta = stbp::load_params(sim_params);
      stbp::SimConfig config;
      config.N = sim_N;
      config.seed = sim_seed;
      stbp::EventPanel panel = stbp::simulate(beta.spec, beta, config);
      stbp::serialize_panel(panel, sim_out);
      stbp::Matrix freq = stbp::frequency_report(panel);
      ordered_json j;
      j["N"] = panel.N;
      j["event_frequency_by_location"] = ordered_json::array();
      for (stbp::Index k = 0; k < freq.rows(); ++k)
        j["event_frequency_by_location"].push_back(
            std::vector<double>(freq.row(k).begin(), freq.row(k).end()));
      std::cout << j.dump(2) << "\n";
    } else if (*est_cmd) {
      stbp::EventPanel panel = stbp::load_panel(est_panel, stbp::link_from_name(est_link));
      stbp::SolveOptions options;
      options.rho = est_rho;
      options.threads = est_threads;
      stbp::EstimateResult fit;
      if (est_name == "ls")
        fit = stbp::estimate_ls(panel, estimation_set(panel.spec, 0.0), options);
      else if (est_name == "ml")
        fit = stbp::estimate_ml(panel, estimation_set(panel.spec, est_rho), options);
      else if (est_name == "vi")
        fit = stbp::estimate_vi(panel, panel.spec.link, estimation_set(panel.spec, 0.0), options);
      else if (est_name == "ml-logistic")
        fit = stbp::estimate_ml_logistic(panel, estimation_set(panel.spec, 0.0), options);
      else
        throw CLI::ValidationError("--estimator", "unknown estimator " + est_name);
      stbp::serialize_params(fit.beta_hat, est_out);
      ordered_json j;
      j["converged"] = fit.converged;
      j["iterations"] = fit.iterations;
      j["residual"] = fit.residual;
      std::cout << j.dump(2) << "\n";
    } else if (*bnd_cmd) {
      stbp::EventPanel panel = stbp::load_panel(bnd_panel);
      stbp::SuffStats stats = stbp::accumulate(panel);
      const stbp::Index kappa = panel.spec.param_count();
      const int p = bnd_p == "1" ? 1 : bnd_p == "2" ? 2 : 0;
      stbp::Matrix A = reduced_gram(stats);
      ordered_json j;
      stbp::DeviationBound dev = stbp::deviation_bound(panel.N, kappa, bnd_eps);
      j["kappa"] = kappa;
      j["N"] = panel.N;
      j["epsilon"] = bnd_eps;
      j["deviation_bound"] = dev.delta_inf;
      try {
        stbp::RiskBound risk = stbp::risk_bound(A, panel.N, kappa, bnd_eps, p);
        j["theta_p"] = risk.theta_p_value;
        j["theta1_lower_bound"] = risk.theta1_lower;
        j["risk_bound"] = risk.value;
      } catch (const std::exception& ex) {
        j["risk_bound_error"] = ex.what();
      }
      std::cout << j.dump(2) << "\n";
    } else if (*ci_cmd) {
      stbp::EventPanel panel = stbp::load_panel(ci_panel);
      stbp::SuffStats stats = stbp::accumulate(panel);
      stbp::FeasibleSet set = estimation_set(panel.spec, 0.0);
      stbp::ConfintOptions options;
      options.y = ci_y;
      options.target_coverage = ci_cov;
      options.threads = ci_threads;
      if (ci_coords.empty())
        for (stbp::Index i = 0; i < panel.spec.param_count(); ++i) ci_coords.push_back(i);
      ordered_json j;
      j["intervals"] = ordered_json::array();
      for (stbp::Index c : ci_coords) {
        stbp::Vector e = stbp::Vector::Zero(panel.spec.param_count());
        e[c] = 1.0;
        stbp::ConfintResult ci = stbp::confint_linear(e, stats, set, options);
        ordered_json row;
        row["coordinate"] = c;
        row["lower"] = ci.lower;
        row["upper"] = ci.upper;
        row["infeasible"] = ci.infeasible;
        j["intervals"].push_back(row);
        j["band_parameter_y"] = ci.y;
        j["coverage_level"] = ci.coverage;
      }
      std::cout << j.dump(2) << "\n";
    } else if (*exp_cmd) {
      stbp::ExperimentConfig config = stbp::load_experiment_config(exp_config);
      stbp::ReportBundle bundle = stbp::run_experiment(config);
      stbp::emit_report(bundle, exp_format, exp_figures);
      std::cout << "report written to " << config.output_dir << "\n";
    } else if (*ing_cmd) {
      stbp::GridSpec grid;
      grid.lat_min = lat_min;
      grid.lat_max = lat_max;
      grid.lon_min = lon_min;
      grid.lon_max = lon_max;
      grid.rows = ing_rows;
      grid.cols = ing_cols;
      grid.bin_seconds = bin_seconds;
      for (const std::string& kv : ing_cats) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw CLI::ValidationError("--category", "expected name=id, got " + kv);
        grid.categories[kv.substr(0, eq)] = std::stoi(kv.substr(eq + 1));
      }
      stbp::IngestReport report;
      stbp::EventPanel panel = stbp::ingest_events(ing_csv, grid, ing_d, report);
      stbp::serialize_panel(panel, ing_out);
      ordered_json j;
      j["total_rows"] = report.total_rows;
      j["kept"] = report.kept;
      j["collisions"] = report.collisions;
      j["out_of_box"] = report.out_of_box;
      j["N"] = report.N;
      std::cout << j.dump(2) << "\n";
    } else if (*cv_cmd) {
      stbp::EventPanel panel = stbp::load_panel(cv_panel);
      stbp::DepthChoice choice =
          stbp::cross_validate_depth(panel, cv_cands, cv_est, cv_split, cv_seed);
      ordered_json j;
      j["chosen_depth"] = choice.chosen;
      j["scores"] = ordered_json::array();
      for (const auto& [d, score] : choice.scores) {
        ordered_json row;
        row["depth"] = d;
        row["score"] = score;
        j["scores"].push_back(row);
      }
      j["failed_depths"] = choice.failed;
      std::cout << j.dump(2) << "\n";
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
