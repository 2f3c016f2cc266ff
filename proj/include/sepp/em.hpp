#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sepp/data.hpp"
#include "sepp/kernels.hpp"
#include "sepp/model.hpp"

namespace sepp {

// Sparse branching matrix of one group: a background probability per event
// and, in CSR layout, the probabilities of each earlier parent.
struct BranchingPosteriorSingle {
  std::vector<double> diag;
  std::vector<std::size_t> offsets{0};  // size() + 1 entries
  std::vector<std::uint32_t> parents;
  std::vector<double> probs;

  std::size_t size() const { return diag.size(); }
  std::span<const std::uint32_t> parents_of(std::size_t i) const {
    return {parents.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
  std::span<const double> probs_of(std::size_t i) const {
    return {probs.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
  double row_sum(std::size_t i) const;
  double trigger_sum(std::size_t i) const;
};

// Pairs with omega dt beyond `decay_exponent` or distance beyond
// `sigma_multiple` sigma contribute below 1e-17 of a peak term and are skipped.
struct Truncation {
  bool enabled = true;
  double decay_exponent = 40.0;
  double sigma_multiple = 8.0;
};

struct FitConfig {
  int max_iters = 200;
  double tol = 1e-4;
  // Intensity floor is lambda_floor_scale * N / window volume.
  double lambda_floor_scale = 1e-12;
  // sigma and bandwidth floors are sigma_floor_scale * window diagonal
  // (temporal bandwidth: * window duration).
  double sigma_floor_scale = 1e-6;
  BandwidthConfig bandwidth;
  bool freeze_bandwidths = false;
  Truncation truncation;
  // Used when a group has no triggering mass. Derived from the data scale
  // (1 / mean inter-event gap, median pairwise distance) when unset.
  std::optional<double> prior_omega;
  std::optional<double> prior_sigma;
  // Seeds the pair subsample used for the median pairwise distance on large
  // datasets.
  std::uint64_t seed = 0;
};

// Data-derived constants shared by initialization and the M-step.
struct FitScales {
  double mean_gap = 1.0;         // mean inter-event time
  double median_distance = 1.0;  // median pairwise spatial distance
  double neighbor_distance = 1.0;  // median nearest-neighbour spatial distance
  double sigma_floor = 0.0;
  double time_floor = 0.0;
  double lambda_floor = 0.0;
  double prior_omega = 1.0;
  double prior_sigma = 1.0;
};

FitScales compute_scales(const MarkedDataset& data, const FitConfig& config);

struct EStepStats {
  std::size_t clamped = 0;  // events whose intensity fell below the floor
};

struct MStepResult {
  GroupParams params;
  bool no_trigger_mass = false;
};

// Deterministic start: parents weighted by exp(-dt / mean_gap) *
// exp(-d^2 / (2 neighbor_distance^2)), half of every row on the background.
BranchingPosteriorSingle warm_start(const MarkedDataset& data,
                                    const FitScales& scales,
                                    const Truncation& truncation);

BranchingPosteriorSingle e_step(const MarkedDataset& data,
                                const GroupParams& params,
                                const FitConfig& config,
                                const FitScales& scales,
                                EStepStats* stats = nullptr);

// `previous_bandwidths` is reused when config.freeze_bandwidths is set.
MStepResult m_step(const MarkedDataset& data,
                   const BranchingPosteriorSingle& P, const FitConfig& config,
                   const FitScales& scales,
                   const Bandwidths* previous_bandwidths = nullptr);

double complete_data_loglik(const MarkedDataset& data,
                            const BranchingPosteriorSingle& P,
                            const GroupParams& params, const Window& window,
                            double lambda_floor,
                            std::size_t* floored = nullptr);

struct EmObserver {
  // Called after each E-step with the new posterior and the parameters that
  // produced it.
  std::function<void(int iteration, const BranchingPosteriorSingle&,
                     const GroupParams&)>
      on_e_step;
};

FittedModel fit(const MarkedDataset& data, const FitConfig& config = {},
                const EmObserver* observer = nullptr);

// max over (K0, omega, sigma, mu0) of |new - old| / (|old| + 1e-12).
double max_relative_change(std::span<const double> previous,
                           std::span<const double> current);

}  // namespace sepp
