// Command-line front end: simulate, cluster, fit, evaluate, report.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sepp/cli.hpp"
#include "sepp/error.hpp"

namespace {

using sepp::cli::Common;
using sepp::cli::ConfigMap;

void add_common(CLI::App* cmd, Common& c, std::string& config) {
  cmd->add_option("--seed", c.seed, "Seed for all randomness");
  cmd->add_option("--threads", c.threads, "Worker thread cap")->check(CLI::PositiveNumber);
  cmd->add_option("--config", config, "Flat key = value config file");
  cmd->add_option("--out", c.out, "Output directory");
}

// Fills options the user did not pass on the command line from the config
// file; flags always win.
template <typename T>
void from_config(const ConfigMap& cfg, CLI::App* cmd, const std::string& flag,
                 const std::string& key, T& target) {
  const auto it = cfg.find(key);
  if (it == cfg.end() || cmd->count(flag) > 0) return;
  if (!CLI::detail::lexical_conversion<T, T>({it->second}, target))
    throw sepp::Error("config: field '" + key + "' has invalid value '" + it->second + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Marked self-exciting point process toolkit"};
  app.require_subcommand(1);

  std::string config;
  std::optional<double> horizon;
  std::string subset = "all";

  sepp::cli::SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate synthetic marked datasets");
  add_common(simulate, sim.common, config);
  simulate->add_option("--replicates", sim.replicates, "Number of datasets");
  simulate->add_option("--unlabeled", sim.unlabeled_fraction, "Fraction of events without marks");

  sepp::cli::ClusterArgs clu;
  auto* cluster = app.add_subcommand("cluster", "Cluster toxicology reports with NMF");
  add_common(cluster, clu.common, config);
  cluster->add_option("--tox", clu.tox, "Report x substance CSV")->required();
  cluster->add_option("--k", clu.k, "Fixed number of clusters (skips selection)");
  cluster->add_option("--k-min", clu.k_min, "Smallest K tried");
  cluster->add_option("--k-max", clu.k_max, "Largest K tried");
  cluster->add_option("--top", clu.top, "Top substances per cluster");
  cluster->add_option("--iters", clu.iters, "Multiplicative update iterations");
  cluster->add_option("--restarts", clu.restarts, "Random restarts");

  sepp::cli::FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the multi-group model");
  add_common(fit_cmd, fit.common, config);
  fit_cmd->add_option("--events", fit.events, "Events CSV")->required();
  fit_cmd->add_option("--labels", fit.labels, "Labels CSV (id,group)");
  fit_cmd->add_option("--k", fit.k, "Number of groups");
  fit_cmd->add_option("--horizon", horizon, "End of the observation window");

  sepp::cli::EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score a model: log-likelihood, AIC, AUC");
  add_common(evaluate, ev.common, config);
  evaluate->add_option("--model", ev.model, "Model JSON")->required();
  evaluate->add_option("--events", ev.events, "Events CSV")->required();
  evaluate->add_option("--labels", ev.labels, "Labels CSV (id,group)");
  evaluate->add_option("--grid", ev.grid, "Cells per side of the forecast grid");
  evaluate->add_option("--subset", subset, "A, B or all");
  evaluate->add_flag("--baselines", ev.baselines, "Also fit and score A-only / B-only baselines");
  evaluate->add_flag("!--no-auc", ev.auc, "Skip the grid AUC");
  evaluate->add_flag("--day-integrated", ev.day_integrated, "Score cells by their day integral");
  evaluate->add_flag("--dump-forecasts", ev.dump_forecasts, "Write every daily grid");

  sepp::cli::ReportArgs rep;
  auto* report = app.add_subcommand("report", "Emit plot data for a fitted model");
  add_common(report, rep.common, config);
  report->add_option("--model", rep.model, "Model JSON")->required();
  report->add_option("--events", rep.events, "Events CSV")->required();
  report->add_option("--labels", rep.labels, "Labels CSV (id,group)");
  report->add_option("--grid", rep.grid, "Heatmap cells per side");
  report->add_option("--bins", rep.bins, "Histogram bins");

  CLI11_PARSE(app, argc, argv);

  try {
    ConfigMap cfg;
    if (!config.empty()) cfg = sepp::cli::load_config(config);
    auto finish_common = [&](CLI::App* cmd, Common& c) {
      if (!config.empty()) c.config = config;
      from_config(cfg, cmd, "--seed", "seed", c.seed);
      from_config(cfg, cmd, "--threads", "threads", c.threads);
    };

    if (simulate->parsed()) {
      finish_common(simulate, sim.common);
      from_config(cfg, simulate, "--replicates", "replicates", sim.replicates);
      return sepp::cli::cmd_simulate(sim);
    }
    if (cluster->parsed()) {
      finish_common(cluster, clu.common);
      if (!clu.k && cfg.count("k")) {
        int k = 0;
        from_config(cfg, cluster, "--k", "k", k);
        clu.k = k;
      }
      return sepp::cli::cmd_cluster(clu);
    }
    if (fit_cmd->parsed()) {
      finish_common(fit_cmd, fit.common);
      from_config(cfg, fit_cmd, "--k", "k", fit.k);
      if (!horizon && cfg.count("horizon")) {
        double h = 0.0;
        from_config(cfg, fit_cmd, "--horizon", "horizon", h);
        horizon = h;
      }
      fit.horizon = horizon;
      return sepp::cli::cmd_fit(fit);
    }
    if (evaluate->parsed()) {
      finish_common(evaluate, ev.common);
      from_config(cfg, evaluate, "--grid", "grid", ev.grid);
      from_config(cfg, evaluate, "--subset", "subset", subset);
      ev.subset = sepp::parse_subset(subset);
      return sepp::cli::cmd_evaluate(ev);
    }
    if (report->parsed()) {
      finish_common(report, rep.common);
      from_config(cfg, report, "--grid", "grid", rep.grid);
      return sepp::cli::cmd_report(rep);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
