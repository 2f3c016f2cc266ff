#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "sepp/data.hpp"
#include "sepp/kernels.hpp"

namespace sepp {

// Quadrants of the unit square: 1 = top-left, 2 = top-right,
// 3 = bottom-left, 4 = bottom-right.
struct GroupSimSpec {
  std::array<double, 4> bg{0.25, 0.25, 0.25, 0.25};
  double mu = 0.0;  // expected background count over [0, T]
  TriggerParams trigger;
  int label = 0;

  void validate() const;
};

struct SimConfig {
  std::vector<GroupSimSpec> groups;
  double T = 1000.0;
  double unlabeled_fraction = 0.3;
  std::uint64_t seed = 0;
  std::size_t max_events = 1'000'000;

  void validate() const;
};

// The four-group synthetic setting (background quadrant rates and triggering
// parameters per group).
SimConfig reference_config(double unlabeled_fraction = 0.3,
                           std::uint64_t seed = 0);

using Rng = std::mt19937_64;

// Independent stream for replicate `index` of a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Simulated event before ids are assigned; parent is an index into the
// same vector, -1 for background events.
struct SimEvent {
  double t = 0.0, x = 0.0, y = 0.0;
  int group = 0;
  std::int64_t parent = -1;
};

std::vector<SimEvent> simulate_background(const GroupSimSpec& spec, double T,
                                          Rng& rng);
std::vector<SimEvent> simulate_background(const GroupSimSpec& spec, double T,
                                          std::uint64_t seed);

// Every generation descending from `parent` that lands in [0, T]. Parent
// indices of the result refer to `parent_index` for direct children and to
// positions in the returned vector offset by `base` otherwise.
std::vector<SimEvent> simulate_offspring(const SimEvent& parent,
                                         std::int64_t parent_index,
                                         std::int64_t base,
                                         const TriggerParams& trigger,
                                         double T, Rng& rng,
                                         std::size_t max_events = 1'000'000);

struct TruthRow {
  std::int64_t id = 0;
  int true_group = 0;
  std::int64_t parent_id = -1;
};

struct SimulatedData {
  MarkedDataset dataset;  // A events carry no mark
  std::vector<TruthRow> truth;
  std::vector<int> true_marks;  // aligned with dataset order
  std::vector<std::size_t> true_counts;
};

SimulatedData simulate_dataset(const SimConfig& config);

// Truth sidecar CSV `id,true_group,parent_id`.
void save_truth(const std::filesystem::path& path,
                const std::vector<TruthRow>& truth);

}  // namespace sepp
