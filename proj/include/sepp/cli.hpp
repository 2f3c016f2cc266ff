#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sepp/em.hpp"
#include "sepp/eval.hpp"
#include "sepp/sim.hpp"

namespace sepp::cli {

// Flat `key = value` config; `#` starts a comment.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(const std::string& text);
ConfigMap load_config(const std::filesystem::path& path);

// Unknown keys and unparsable values throw naming the field.
SimConfig sim_config_from(const ConfigMap& cfg);
FitConfig fit_config_from(const ConfigMap& cfg);

struct Common {
  std::uint64_t seed = 0;
  int threads = 1;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out = ".";
};

struct SimulateArgs {
  Common common;
  int replicates = 1;
  std::optional<double> unlabeled_fraction;
};

struct ClusterArgs {
  Common common;
  std::filesystem::path tox;
  std::optional<int> k;  // skips selection
  int k_min = 2;
  int k_max = 8;
  int top = 5;
  int iters = 500;
  int restarts = 5;
};

struct FitArgs {
  Common common;
  std::filesystem::path events;
  std::optional<std::filesystem::path> labels;
  int k = 1;
  std::optional<double> horizon;
};

struct EvaluateArgs {
  Common common;
  std::filesystem::path model;
  std::filesystem::path events;
  std::optional<std::filesystem::path> labels;
  int grid = 50;
  Subset subset = Subset::all;
  bool baselines = false;
  bool auc = true;
  bool day_integrated = false;
  bool dump_forecasts = false;
};

struct ReportArgs {
  Common common;
  std::filesystem::path model;
  std::filesystem::path events;
  std::optional<std::filesystem::path> labels;
  int grid = 50;
  int bins = 50;
};

// Each command writes its outputs plus manifest.json into common.out and
// returns the process exit code.
int cmd_simulate(const SimulateArgs& args);
int cmd_cluster(const ClusterArgs& args);
int cmd_fit(const FitArgs& args);
int cmd_evaluate(const EvaluateArgs& args);
int cmd_report(const ReportArgs& args);

}  // namespace sepp::cli
