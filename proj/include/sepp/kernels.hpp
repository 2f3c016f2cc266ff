#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "sepp/data.hpp"

namespace sepp {

// Exponential-in-time, isotropic-Gaussian-in-space triggering kernel.
struct TriggerParams {
  double K0 = 0.0;     // expected direct offspring per event
  double omega = 1.0;  // temporal decay rate
  double sigma = 1.0;  // spatial spread

  void validate() const;
};

// Offspring density at offset (dx, dy, dt) from the parent; zero for dt <= 0.
double trigger_density(double dx, double dy, double dt, const TriggerParams& p);

// Expected offspring within dt_max of the parent: K0 (1 - exp(-omega dt_max)).
double trigger_mass(double dt_max, const TriggerParams& p);

struct SupportPoint {
  double t = 0.0, x = 0.0, y = 0.0;
  double w = 0.0;
  std::int64_t id = -1;  // event id this point was built from; -1 if none
};

// Weighted Gaussian product-kernel background. v(t) and u(x, y) each
// integrate to one; Nb is the total weight.
class KdeBackground {
 public:
  KdeBackground() = default;
  KdeBackground(std::vector<SupportPoint> points, double b1, double b2);

  std::span<const SupportPoint> points() const { return points_; }
  double b1() const { return b1_; }
  double b2() const { return b2_; }
  double Nb() const { return Nb_; }

  // Support index carrying event `id`, for leave-one-out evaluation.
  std::optional<std::size_t> index_of(std::int64_t id) const;

 private:
  std::vector<SupportPoint> points_;
  double b1_ = 1.0, b2_ = 1.0;
  double Nb_ = 0.0;
  std::unordered_map<std::int64_t, std::size_t> by_id_;
};

// Leave-one-out temporal density v(t) (1/time). Throws on Nb = 0.
double kde_time(double t, const KdeBackground& bg,
                std::optional<std::size_t> exclude = std::nullopt);

// Leave-one-out spatial density u(x, y) (1/area). Throws on Nb = 0.
double kde_space(double x, double y, const KdeBackground& bg,
                 std::optional<std::size_t> exclude = std::nullopt);

// Probability mass of v inside [t0, t1].
double kde_time_mass(double t0, double t1, const KdeBackground& bg);

enum class BandwidthStrategy { nearest_neighbor, cross_validation };

struct BandwidthConfig {
  BandwidthStrategy strategy = BandwidthStrategy::nearest_neighbor;
  int k = 15;
  double time_floor = 1e-9;
  double space_floor = 1e-9;
};

struct Bandwidths {
  double b1 = 0.0;  // temporal
  double b2 = 0.0;  // spatial
};

// Nearest-neighbour bandwidths: for each weighted event, the distance at which
// the weight of its neighbours reaches min(k, remaining weight); b is the
// weight-weighted median of those distances. With unit weights this is the
// median k-th nearest neighbour distance. Requires at least two events.
Bandwidths select_bandwidths(std::span<const EventRecord> events,
                             std::span<const double> weights,
                             const BandwidthConfig& config = {});

}  // namespace sepp
