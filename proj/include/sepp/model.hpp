#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sepp/data.hpp"
#include "sepp/kernels.hpp"

namespace sepp {

// One group's self-exciting model: lambda = mu0 u v + sum g.
struct GroupParams {
  TriggerParams trigger;
  double mu0 = 0.0;  // expected background count
  KdeBackground background;
  // When set, u = 1/area and v = 1/duration inside the model window and the
  // KDE support is ignored. Used for flat reference models.
  bool uniform_background = false;
  bool empty = false;  // group lost all mass during fitting; held at priors
};

// Inferred group of one unlabeled event.
struct MarkAssignment {
  std::int64_t id = 0;
  int group = 0;
  double prob = 1.0;              // max_k r(k)
  std::vector<double> resp;       // r(k), sums to one
};

struct ConvergenceTrace {
  int iterations = 0;
  bool converged = false;
  std::vector<double> deltas;               // max relative change per iteration
  std::vector<std::vector<double>> params;  // (K0, omega, sigma, mu0) per group, flattened
};

struct FittedModel {
  Window window;
  std::vector<GroupParams> groups;
  bool fused = false;
  std::vector<MarkAssignment> assignments;  // unlabeled events only
  // Fraction of the training events per source; scales the intensity when
  // scoring a single source.
  double share_a = 1.0;
  double share_b = 1.0;
  ConvergenceTrace trace;
  std::size_t warnings = 0;

  int K() const { return static_cast<int>(groups.size()); }
};

inline constexpr int kModelFormatVersion = 1;

// Model JSON: {format_version, K, window, groups:[...], assignments:[...]}.
std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(const std::string& text);
void save_model(const FittedModel& model, const std::filesystem::path& path);
FittedModel load_model(const std::filesystem::path& path);

}  // namespace sepp
