#include "sepp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "sepp/error.hpp"

namespace sepp {

namespace {

// Kernel terms beyond this many bandwidths are below exp(-72) of the peak.
constexpr double kKdeCutoff = 12.0;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(std::string("non-finite ") + what);
}

}  // namespace

void TriggerParams::validate() const {
  if (!std::isfinite(K0) || !std::isfinite(omega) || !std::isfinite(sigma))
    throw Error("trigger parameters must be finite");
  if (K0 < 0.0) throw Error("K0 must be non-negative");
  if (!(omega > 0.0)) throw Error("omega must be positive");
  if (!(sigma > 0.0)) throw Error("sigma must be positive");
}

double trigger_density(double dx, double dy, double dt, const TriggerParams& p) {
  require_finite(dx, "dx");
  require_finite(dy, "dy");
  require_finite(dt, "dt");
  if (dt <= 0.0 || p.K0 == 0.0) return 0.0;
  const double s2 = p.sigma * p.sigma;
  return p.K0 * p.omega * std::exp(-p.omega * dt) *
         std::exp(-(dx * dx + dy * dy) / (2.0 * s2)) / (2.0 * std::numbers::pi * s2);
}

double trigger_mass(double dt_max, const TriggerParams& p) {
  if (std::isnan(dt_max) || dt_max < 0.0) throw Error("trigger_mass: dt_max must be >= 0");
  if (std::isinf(dt_max)) return p.K0;
  return -p.K0 * std::expm1(-p.omega * dt_max);
}

KdeBackground::KdeBackground(std::vector<SupportPoint> points, double b1, double b2)
    : points_(std::move(points)), b1_(b1), b2_(b2) {
  if (!std::isfinite(b1_) || !std::isfinite(b2_) || !(b1_ > 0.0) || !(b2_ > 0.0))
    throw Error("KDE bandwidths must be finite and positive");
  by_id_.reserve(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    if (!(p.w >= 0.0) || !std::isfinite(p.w)) throw Error("KDE weights must be finite and >= 0");
    Nb_ += p.w;
    if (p.id >= 0) by_id_.emplace(p.id, i);
  }
}

std::optional<std::size_t> KdeBackground::index_of(std::int64_t id) const {
  if (auto it = by_id_.find(id); it != by_id_.end()) return it->second;
  return std::nullopt;
}

double kde_time(double t, const KdeBackground& bg, std::optional<std::size_t> exclude) {
  if (!(bg.Nb() > 0.0)) throw Error("no background mass");
  const double b = bg.b1();
  const double reach = kKdeCutoff * b;
  const auto pts = bg.points();
  double sum = 0.0;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (pts[j].w == 0.0 || (exclude && *exclude == j)) continue;
    const double d = t - pts[j].t;
    if (std::abs(d) > reach) continue;
    sum += pts[j].w * std::exp(-d * d / (2.0 * b * b));
  }
  return sum / (bg.Nb() * std::sqrt(2.0 * std::numbers::pi) * b);
}

double kde_space(double x, double y, const KdeBackground& bg, std::optional<std::size_t> exclude) {
  if (!(bg.Nb() > 0.0)) throw Error("no background mass");
  const double b = bg.b2();
  const double reach2 = kKdeCutoff * kKdeCutoff * b * b;
  const auto pts = bg.points();
  double sum = 0.0;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (pts[j].w == 0.0 || (exclude && *exclude == j)) continue;
    const double dx = x - pts[j].x;
    const double dy = y - pts[j].y;
    const double r2 = dx * dx + dy * dy;
    if (r2 > reach2) continue;
    sum += pts[j].w * std::exp(-r2 / (2.0 * b * b));
  }
  return sum / (bg.Nb() * 2.0 * std::numbers::pi * b * b);
}

double kde_time_mass(double t0, double t1, const KdeBackground& bg) {
  if (!(bg.Nb() > 0.0)) throw Error("no background mass");
  const double s = std::numbers::sqrt2 * bg.b1();
  double sum = 0.0;
  for (const auto& p : bg.points()) {
    if (p.w == 0.0) continue;
    // Phi(b) - Phi(a) = (erfc(a') - erfc(b')) / 2, accurate in both tails.
    sum += p.w * 0.5 * (std::erfc((t0 - p.t) / s) - std::erfc((t1 - p.t) / s));
  }
  return sum / bg.Nb();
}

namespace {

// Weighted median: first value whose cumulative weight reaches half the
// total; an exact half split averages the two neighbours.
double weighted_median(std::vector<std::pair<double, double>> vw) {
  std::sort(vw.begin(), vw.end());
  double total = 0.0;
  for (const auto& [v, w] : vw) total += w;
  const double half = 0.5 * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < vw.size(); ++i) {
    cum += vw[i].second;
    if (std::abs(cum - half) <= 1e-12 * total && i + 1 < vw.size())
      return 0.5 * (vw[i].first + vw[i + 1].first);
    if (cum >= half) return vw[i].first;
  }
  return vw.back().first;
}

// Distance at which the neighbours' cumulative weight reaches `target`.
double weighted_kth_distance(std::vector<std::pair<double, double>>& nb, double target) {
  const double goal = target * (1.0 - 1e-12);
  double cum = 0.0;
  std::size_t done = 0;
  auto m = std::min(nb.size(), static_cast<std::size_t>(4.0 * target) + 16);
  while (done < nb.size()) {
    if (m < nb.size())
      std::nth_element(nb.begin() + static_cast<std::ptrdiff_t>(done),
                       nb.begin() + static_cast<std::ptrdiff_t>(m), nb.end());
    std::sort(nb.begin() + static_cast<std::ptrdiff_t>(done),
              nb.begin() + static_cast<std::ptrdiff_t>(m));
    for (; done < m; ++done) {
      cum += nb[done].second;
      if (cum >= goal) return nb[done].first;
    }
    m = std::min(nb.size(), 2 * m);
  }
  return nb.empty() ? 0.0 : nb.back().first;
}

template <typename Dist>
double knn_bandwidth(std::size_t n, std::span<const double> weights, int k, double floor,
                     Dist dist) {
  // Neighbours are counted over the support (positive weight); the weights
  // only enter through the median.
  std::size_t support = 0;
  for (double w : weights) support += w > 0.0;
  if (support < 2) return floor;
  const double target = static_cast<double>(std::min<std::size_t>(static_cast<std::size_t>(k), support - 1));
  std::vector<std::pair<double, double>> per_event;
  std::vector<std::pair<double, double>> nb;
  nb.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] <= 0.0) continue;
    nb.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && weights[j] > 0.0) nb.emplace_back(dist(i, j), 1.0);
    per_event.emplace_back(weighted_kth_distance(nb, target), weights[i]);
  }
  if (per_event.empty()) return floor;
  return std::max(floor, weighted_median(std::move(per_event)));
}

// Weighted leave-one-out log density of a Gaussian KDE at bandwidth b.
template <typename Dist2>
double loo_score(std::size_t n, std::span<const double> weights, double b, int dim,
                 Dist2 dist2) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double norm = dim == 1 ? std::sqrt(2.0 * std::numbers::pi) * b
                               : 2.0 * std::numbers::pi * b * b;
  double score = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] <= 0.0 || total - weights[i] <= 0.0) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && weights[j] > 0.0) s += weights[j] * std::exp(-dist2(i, j) / (2.0 * b * b));
    const double dens = s / ((total - weights[i]) * norm);
    score += weights[i] * std::log(std::max(dens, 1e-300));
  }
  return score;
}

template <typename Dist2>
double cv_bandwidth(std::size_t n, std::span<const double> weights, double start, int dim,
                    double floor, Dist2 dist2) {
  double best = start, best_score = -std::numeric_limits<double>::infinity();
  for (int s = -6; s <= 4; ++s) {
    const double b = std::max(floor, start * std::exp2(0.5 * s));
    const double score = loo_score(n, weights, b, dim, dist2);
    if (score > best_score) {
      best_score = score;
      best = b;
    }
  }
  return best;
}

}  // namespace

Bandwidths select_bandwidths(std::span<const EventRecord> events,
                             std::span<const double> weights, const BandwidthConfig& config) {
  if (events.size() < 2) throw Error("select_bandwidths: need at least 2 events");
  if (weights.size() != events.size()) throw Error("select_bandwidths: weight count mismatch");
  if (config.k < 1) throw Error("select_bandwidths: k must be >= 1");
  const std::size_t n = events.size();
  auto dt = [&](std::size_t i, std::size_t j) { return std::abs(events[i].t - events[j].t); };
  auto dxy = [&](std::size_t i, std::size_t j) {
    return std::hypot(events[i].x - events[j].x, events[i].y - events[j].y);
  };
  Bandwidths b;
  b.b1 = knn_bandwidth(n, weights, config.k, config.time_floor, dt);
  b.b2 = knn_bandwidth(n, weights, config.k, config.space_floor, dxy);
  if (config.strategy == BandwidthStrategy::cross_validation) {
    auto dt2 = [&](std::size_t i, std::size_t j) { return dt(i, j) * dt(i, j); };
    auto dxy2 = [&](std::size_t i, std::size_t j) {
      const double dx = events[i].x - events[j].x, dy = events[i].y - events[j].y;
      return dx * dx + dy * dy;
    };
    b.b1 = cv_bandwidth(n, weights, b.b1, 1, config.time_floor, dt2);
    b.b2 = cv_bandwidth(n, weights, b.b2, 2, config.space_floor, dxy2);
  }
  return b;
}

}  // namespace sepp
