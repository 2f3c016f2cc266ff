#pragma once

// Internal helpers shared by em, fuse and eval. Keeping one definition of the
// kernel arithmetic makes the single-group and K = 1 fused paths agree bit
// for bit.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "sepp/data.hpp"
#include "sepp/em.hpp"
#include "sepp/kernels.hpp"
#include "sepp/model.hpp"

namespace sepp::detail {

// Triggering kernel with its truncation radii precomputed.
struct TriggerEval {
  double coef = 0.0;  // K0 omega / (2 pi sigma^2)
  double omega = 1.0;
  double inv_2s2 = 1.0;
  double max_dt = std::numeric_limits<double>::infinity();
  double max_r2 = std::numeric_limits<double>::infinity();

  TriggerEval(const TriggerParams& p, const Truncation& trunc) {
    const double s2 = p.sigma * p.sigma;
    coef = p.K0 * p.omega / (2.0 * std::numbers::pi * s2);
    omega = p.omega;
    inv_2s2 = 1.0 / (2.0 * s2);
    if (trunc.enabled) {
      max_dt = trunc.decay_exponent / p.omega;
      const double r = trunc.sigma_multiple * p.sigma;
      max_r2 = r * r;
    }
  }

  bool active() const { return coef > 0.0; }

  double operator()(double r2, double dt) const {
    return coef * std::exp(-(omega * dt + r2 * inv_2s2));
  }
};

// mu0 u(x, y) v(t); leave-one-out on the support point carrying `id`.
inline double background_intensity(const GroupParams& g, const Window& window, double x,
                                   double y, double t, std::optional<std::int64_t> id) {
  if (g.mu0 == 0.0) return 0.0;
  if (g.uniform_background) {
    const bool inside = t >= window.t0 && t <= window.t1 && x >= window.x0 &&
                        x <= window.x1 && y >= window.y0 && y <= window.y1;
    return inside ? g.mu0 / window.volume() : 0.0;
  }
  if (!(g.background.Nb() > 0.0)) return 0.0;
  std::optional<std::size_t> exclude;
  if (id) exclude = g.background.index_of(*id);
  return g.mu0 * kde_space(x, y, g.background, exclude) * kde_time(t, g.background, exclude);
}

// Mass of the background inside the window's time span.
inline double background_mass(const GroupParams& g, const Window& window) {
  if (g.mu0 == 0.0) return 0.0;
  if (g.uniform_background) return g.mu0;
  if (!(g.background.Nb() > 0.0)) return 0.0;
  return g.mu0 * kde_time_mass(window.t0, window.t1, g.background);
}

struct WarmLink {
  std::uint32_t parent;
  double h;
};

// exp(-dt / mean_gap) exp(-d^2 / (2 median_distance^2)) for every admissible
// earlier parent, latest parent first.
std::vector<std::vector<WarmLink>> warm_links(const MarkedDataset& data, const FitScales& scales,
                                              const Truncation& truncation);

// Tail-corrected expected offspring of every event, weighted per parent.
double offspring_integral(const MarkedDataset& data, const TriggerParams& p, double T,
                          const std::vector<double>* parent_weights);

// Complete-data objective with optional per-parent weights for the tail term.
double complete_data_loglik_weighted(const MarkedDataset& data,
                                     const BranchingPosteriorSingle& P,
                                     const GroupParams& params, const Window& window,
                                     double lambda_floor,
                                     const std::vector<double>* parent_weights,
                                     std::size_t* floored);

std::vector<double> flatten_params(const std::vector<GroupParams>& groups);

}  // namespace sepp::detail
