#include "sepp/em.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "detail.hpp"
#include "sepp/error.hpp"
#include "sepp/parallel.hpp"

namespace sepp {

double BranchingPosteriorSingle::row_sum(std::size_t i) const {
  return diag[i] + trigger_sum(i);
}

double BranchingPosteriorSingle::trigger_sum(std::size_t i) const {
  double s = 0.0;
  for (double p : probs_of(i)) s += p;
  return s;
}

double max_relative_change(std::span<const double> previous, std::span<const double> current) {
  if (previous.size() != current.size()) throw Error("parameter vectors differ in size");
  double worst = 0.0;
  for (std::size_t i = 0; i < current.size(); ++i)
    worst = std::max(worst, std::abs(current[i] - previous[i]) / (std::abs(previous[i]) + 1e-12));
  return worst;
}

namespace {

double median_pairwise_distance(const MarkedDataset& data, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (n < 2) return 0.0;
  std::vector<double> d;
  constexpr std::size_t kExactLimit = 2000;
  if (n <= kExactLimit) {
    d.reserve(n * (n - 1) / 2);
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j)
        d.push_back(std::hypot(data[i].x - data[j].x, data[i].y - data[j].y));
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    constexpr std::size_t kSamples = 200000;
    d.reserve(kSamples);
    while (d.size() < kSamples) {
      const auto i = pick(rng), j = pick(rng);
      if (i != j) d.push_back(std::hypot(data[i].x - data[j].x, data[i].y - data[j].y));
    }
  }
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

// Typical spacing of clustered points. A start scaled by the median pairwise
// distance spreads the first trigger kernel over the whole window and lets
// the background KDE absorb the clusters.
double median_neighbor_distance(const MarkedDataset& data) {
  const std::size_t n = data.size();
  if (n < 2) return 0.0;
  std::vector<double> nn(n, std::numeric_limits<double>::infinity());
  parallel_for(n, [&](std::size_t i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) best = std::min(best, std::hypot(data[i].x - data[j].x, data[i].y - data[j].y));
    nn[i] = best;
  });
  const auto mid = nn.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(nn.begin(), mid, nn.end());
  return *mid;
}

}  // namespace

FitScales compute_scales(const MarkedDataset& data, const FitConfig& config) {
  const Window& w = data.window();
  const std::size_t n = data.size();
  FitScales s;
  s.sigma_floor = config.sigma_floor_scale * w.diagonal();
  s.time_floor = config.sigma_floor_scale * w.duration();
  s.lambda_floor = config.lambda_floor_scale * static_cast<double>(std::max<std::size_t>(n, 1)) /
                   w.volume();
  const double span = n >= 2 ? data[n - 1].t - data[0].t : 0.0;
  s.mean_gap = span > 0.0 ? span / static_cast<double>(n - 1)
                          : w.duration() / static_cast<double>(std::max<std::size_t>(n, 1));
  s.median_distance = std::max(median_pairwise_distance(data, config.seed), s.sigma_floor);
  if (!(s.median_distance > 0.0)) s.median_distance = w.diagonal();
  s.neighbor_distance = std::max(median_neighbor_distance(data), s.sigma_floor);
  if (!(s.neighbor_distance > 0.0)) s.neighbor_distance = s.median_distance;
  s.prior_omega = config.prior_omega.value_or(1.0 / s.mean_gap);
  s.prior_sigma = config.prior_sigma.value_or(s.median_distance);
  return s;
}

namespace detail {

std::vector<std::vector<WarmLink>> warm_links(const MarkedDataset& data, const FitScales& scales,
                                              const Truncation& truncation) {
  const std::size_t n = data.size();
  const double max_dt = truncation.enabled ? truncation.decay_exponent * scales.mean_gap
                                           : std::numeric_limits<double>::infinity();
  const double R = scales.neighbor_distance;
  const double max_r2 = truncation.enabled ? std::pow(truncation.sigma_multiple * R, 2)
                                           : std::numeric_limits<double>::infinity();
  std::vector<std::vector<WarmLink>> links(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& ei = data[i];
    for (std::size_t j = i; j-- > 0;) {
      const auto& ej = data[j];
      const double dt = ei.t - ej.t;
      if (dt <= 0.0) continue;
      if (dt > max_dt) break;
      const double dx = ei.x - ej.x, dy = ei.y - ej.y;
      const double r2 = dx * dx + dy * dy;
      if (r2 > max_r2) continue;
      const double h = std::exp(-dt / scales.mean_gap) * std::exp(-r2 / (2.0 * R * R));
      if (h > 0.0) links[i].push_back({static_cast<std::uint32_t>(j), h});
    }
  });
  return links;
}

double offspring_integral(const MarkedDataset& data, const TriggerParams& p, double T,
                          const std::vector<double>* parent_weights) {
  if (p.K0 == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const double w = parent_weights ? (*parent_weights)[j] : 1.0;
    if (w == 0.0) continue;
    sum += w * trigger_mass(std::max(0.0, T - data[j].t), p);
  }
  return sum;
}

double complete_data_loglik_weighted(const MarkedDataset& data,
                                     const BranchingPosteriorSingle& P,
                                     const GroupParams& params, const Window& window,
                                     double lambda_floor,
                                     const std::vector<double>* parent_weights,
                                     std::size_t* floored) {
  if (P.size() != data.size()) throw Error("posterior size does not match dataset");
  const TriggerEval g(params.trigger, Truncation{.enabled = false});
  std::size_t clamped = 0;
  auto safe_log = [&](double v) {
    if (v < lambda_floor) {
      ++clamped;
      v = lambda_floor;
    }
    return std::log(v);
  };
  double ll = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ei = data[i];
    if (P.diag[i] > 0.0)
      ll += P.diag[i] * safe_log(background_intensity(params, window, ei.x, ei.y, ei.t, ei.id));
    const auto parents = P.parents_of(i);
    const auto probs = P.probs_of(i);
    for (std::size_t m = 0; m < parents.size(); ++m) {
      if (probs[m] == 0.0) continue;
      const auto& ej = data[parents[m]];
      const double dx = ei.x - ej.x, dy = ei.y - ej.y;
      ll += probs[m] * safe_log(g(dx * dx + dy * dy, ei.t - ej.t));
    }
  }
  ll -= params.mu0;
  ll -= offspring_integral(data, params.trigger, window.t1, parent_weights);
  if (floored) *floored += clamped;
  return ll;
}

std::vector<double> flatten_params(const std::vector<GroupParams>& groups) {
  std::vector<double> theta;
  theta.reserve(groups.size() * 4);
  for (const auto& g : groups) {
    theta.push_back(g.trigger.K0);
    theta.push_back(g.trigger.omega);
    theta.push_back(g.trigger.sigma);
    theta.push_back(g.mu0);
  }
  return theta;
}

}  // namespace detail

BranchingPosteriorSingle warm_start(const MarkedDataset& data, const FitScales& scales,
                                    const Truncation& truncation) {
  const auto links = detail::warm_links(data, scales, truncation);
  BranchingPosteriorSingle P;
  const std::size_t n = data.size();
  P.diag.assign(n, 1.0);
  P.offsets.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double S = 0.0;
    for (const auto& l : links[i]) S += l.h;
    if (S > 0.0) {
      P.diag[i] = 0.5;
      for (const auto& l : links[i]) {
        P.parents.push_back(l.parent);
        P.probs.push_back(0.5 * l.h / S);
      }
    }
    P.offsets[i + 1] = P.parents.size();
  }
  return P;
}

BranchingPosteriorSingle e_step(const MarkedDataset& data, const GroupParams& params,
                                const FitConfig& config, const FitScales& scales,
                                EStepStats* stats) {
  const std::size_t n = data.size();
  const Window& window = data.window();
  const detail::TriggerEval g(params.trigger, config.truncation);

  struct Row {
    double diag = 1.0;
    std::vector<std::uint32_t> parents;
    std::vector<double> probs;
    bool clamped = false;
    bool zero = false;
  };
  std::vector<Row> rows(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& ei = data[i];
    Row& row = rows[i];
    const double bg = detail::background_intensity(params, window, ei.x, ei.y, ei.t, ei.id);
    double lambda = bg;
    std::vector<double> terms;
    if (g.active()) {
      for (std::size_t j = i; j-- > 0;) {
        const auto& ej = data[j];
        const double dt = ei.t - ej.t;
        if (dt <= 0.0) continue;
        if (dt > g.max_dt) break;
        const double dx = ei.x - ej.x, dy = ei.y - ej.y;
        const double r2 = dx * dx + dy * dy;
        if (r2 > g.max_r2) continue;
        const double term = g(r2, dt);
        if (term > 0.0) {
          row.parents.push_back(static_cast<std::uint32_t>(j));
          terms.push_back(term);
          lambda += term;
        }
      }
    }
    if (lambda < scales.lambda_floor) row.clamped = true;
    if (!(lambda > 0.0)) {
      row.zero = true;
      row.diag = 1.0;
      row.parents.clear();
      return;
    }
    row.diag = bg / lambda;
    row.probs.reserve(terms.size());
    for (double term : terms) row.probs.push_back(term / lambda);
  });

  BranchingPosteriorSingle P;
  P.diag.resize(n);
  P.offsets.assign(n + 1, 0);
  std::size_t zeros = 0, clamped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    P.diag[i] = rows[i].diag;
    P.parents.insert(P.parents.end(), rows[i].parents.begin(), rows[i].parents.end());
    P.probs.insert(P.probs.end(), rows[i].probs.begin(), rows[i].probs.end());
    P.offsets[i + 1] = P.parents.size();
    zeros += rows[i].zero;
    clamped += rows[i].clamped;
  }
  if (n > 0 && zeros == n) throw Error("e_step: intensity is zero at every event");
  if (stats) stats->clamped += clamped;
  return P;
}

MStepResult m_step(const MarkedDataset& data, const BranchingPosteriorSingle& P,
                   const FitConfig& config, const FitScales& scales,
                   const Bandwidths* previous_bandwidths) {
  if (P.size() != data.size()) throw Error("posterior size does not match dataset");
  const std::size_t n = data.size();
  double trig = 0.0, trig_dt = 0.0, trig_r2 = 0.0, total = 0.0, mu0 = 0.0;
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ei = data[i];
    const auto parents = P.parents_of(i);
    const auto probs = P.probs_of(i);
    double row = P.diag[i];
    for (std::size_t m = 0; m < parents.size(); ++m) {
      const auto& ej = data[parents[m]];
      const double p = probs[m];
      const double dx = ei.x - ej.x, dy = ei.y - ej.y;
      trig += p;
      trig_dt += p * (ei.t - ej.t);
      trig_r2 += p * (dx * dx + dy * dy);
      row += p;
    }
    total += row;
    weights[i] = P.diag[i];
  }

  MStepResult out;
  auto& trigger = out.params.trigger;
  if (trig > 0.0 && trig_dt > 0.0) {
    trigger.K0 = trig / total;
    trigger.omega = trig / trig_dt;
    trigger.sigma = std::max(std::sqrt(trig_r2 / (2.0 * trig)), scales.sigma_floor);
  } else {
    out.no_trigger_mass = true;
    trigger.K0 = 0.0;
    trigger.omega = scales.prior_omega;
    trigger.sigma = std::max(scales.prior_sigma, scales.sigma_floor);
  }

  std::vector<SupportPoint> support(n);
  for (std::size_t i = 0; i < n; ++i) {
    support[i] = {data[i].t, data[i].x, data[i].y, weights[i], data[i].id};
  }
  Bandwidths bw;
  if (config.freeze_bandwidths && previous_bandwidths) {
    bw = *previous_bandwidths;
  } else if (n >= 2) {
    BandwidthConfig bc = config.bandwidth;
    bc.time_floor = std::max(bc.time_floor, scales.time_floor);
    bc.space_floor = std::max(bc.space_floor, scales.sigma_floor);
    bw = select_bandwidths(data.events(), weights, bc);
  } else {
    bw = {data.window().duration(), data.window().diagonal()};
  }
  out.params.background = KdeBackground(std::move(support), bw.b1, bw.b2);
  mu0 = out.params.background.Nb();
  out.params.mu0 = mu0;
  return out;
}

double complete_data_loglik(const MarkedDataset& data, const BranchingPosteriorSingle& P,
                            const GroupParams& params, const Window& window, double lambda_floor,
                            std::size_t* floored) {
  return detail::complete_data_loglik_weighted(data, P, params, window, lambda_floor, nullptr,
                                               floored);
}

FittedModel fit(const MarkedDataset& data, const FitConfig& config, const EmObserver* observer) {
  if (data.size() < 2) throw Error("fit: need at least 2 events");
  if (config.max_iters < 1) throw Error("fit: max_iters must be >= 1");
  if (!(config.tol > 0.0)) throw Error("fit: tol must be positive");

  const FitScales scales = compute_scales(data, config);
  BranchingPosteriorSingle P = warm_start(data, scales, config.truncation);

  FittedModel model;
  model.window = data.window();
  EStepStats stats;
  GroupParams current;
  std::vector<double> previous;
  Bandwidths bw;
  bool have_bw = false;
  int it = 1;
  for (;; ++it) {
    MStepResult M = m_step(data, P, config, scales, have_bw ? &bw : nullptr);
    bw = {M.params.background.b1(), M.params.background.b2()};
    have_bw = true;
    current = std::move(M.params);
    auto theta = detail::flatten_params({current});
    model.trace.params.push_back(theta);
    if (!previous.empty()) {
      const double delta = max_relative_change(previous, theta);
      model.trace.deltas.push_back(delta);
      if (delta < config.tol) {
        model.trace.converged = true;
        break;
      }
    }
    if (it >= config.max_iters) break;
    previous = std::move(theta);
    P = e_step(data, current, config, scales, &stats);
    if (observer && observer->on_e_step) observer->on_e_step(it, P, current);
  }
  model.trace.iterations = it;
  model.groups = {std::move(current)};
  const double n = static_cast<double>(data.size());
  model.share_a = static_cast<double>(data.count(Source::A)) / n;
  model.share_b = static_cast<double>(data.count(Source::B)) / n;
  model.warnings = stats.clamped;
  return model;
}

}  // namespace sepp
