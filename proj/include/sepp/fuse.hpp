#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sepp/data.hpp"
#include "sepp/em.hpp"
#include "sepp/model.hpp"

namespace sepp {

// One branching matrix per group. For an unlabeled event the K rows jointly
// sum to one; for a labeled event only its own group's row is non-zero.
struct BranchingPosteriorMulti {
  std::vector<BranchingPosteriorSingle> groups;

  int K() const { return static_cast<int>(groups.size()); }
  std::size_t size() const { return groups.empty() ? 0 : groups[0].size(); }
  // r_i(k) = p^k_ii + sum_j p^k_ij
  double responsibility(std::size_t i, int k) const {
    return groups[static_cast<std::size_t>(k)].row_sum(i);
  }
  // N x K row-major responsibilities.
  std::vector<double> responsibilities() const;
};

// Diagonal-only start: 1/K for unlabeled events, 1 on the own group for
// labeled events.
BranchingPosteriorMulti init_posteriors(const MarkedDataset& data, int K);

// init_posteriors plus single-group warm-start parent links, split across
// groups by the same pattern. Needed because a diagonal-only start is a fixed
// point with K0 = 0.
BranchingPosteriorMulti warm_start_multi(const MarkedDataset& data, int K,
                                         const FitScales& scales,
                                         const Truncation& truncation);

// Parent j contributes to group k's triggering sum with weight r_j(k) taken
// from `previous` (labeled parents: indicator of their mark).
BranchingPosteriorMulti e_step_multi(const MarkedDataset& data,
                                     std::span<const GroupParams> models,
                                     const BranchingPosteriorMulti& previous,
                                     const FitConfig& config,
                                     const FitScales& scales,
                                     EStepStats* stats = nullptr);

struct MStepMultiResult {
  std::vector<GroupParams> groups;
  std::vector<bool> no_trigger_mass;
};

MStepMultiResult m_step_multi(const MarkedDataset& data,
                              const BranchingPosteriorMulti& P,
                              const FitConfig& config, const FitScales& scales,
                              std::span<const Bandwidths> previous_bandwidths = {});

// Sum over groups of the single-group complete-data objective, parent tails
// weighted by responsibilities.
double complete_data_loglik_multi(const MarkedDataset& data,
                                  const BranchingPosteriorMulti& P,
                                  std::span<const GroupParams> models,
                                  const Window& window, double lambda_floor);

struct FuseObserver {
  std::function<void(int iteration, const BranchingPosteriorMulti&,
                     std::span<const GroupParams>)>
      on_e_step;
};

FittedModel fit_fused(const MarkedDataset& data, int K,
                      const FitConfig& config = {},
                      const FuseObserver* observer = nullptr);

struct InferredMark {
  std::int64_t id = 0;
  int group = 0;
  double prob = 1.0;
};

// One row per unlabeled event. Throws for a non-fused model.
std::vector<InferredMark> infer_marks(const FittedModel& model);

// Estimated events per group: sum of responsibilities over unlabeled events
// plus labeled counts.
std::vector<double> estimated_group_sizes(const MarkedDataset& data,
                                          const FittedModel& model);

}  // namespace sepp
