#include "sepp/fuse.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "detail.hpp"
#include "sepp/error.hpp"
#include "sepp/parallel.hpp"

namespace sepp {

std::vector<double> BranchingPosteriorMulti::responsibilities() const {
  const std::size_t n = size();
  const auto K = static_cast<std::size_t>(this->K());
  std::vector<double> r(n * K);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < K; ++k) r[i * K + k] = groups[k].row_sum(i);
  return r;
}

namespace {

void check_marks(const MarkedDataset& data, int K) {
  if (K < 1) throw Error("K must be at least 1");
  for (const auto& e : data.events())
    if (e.source == Source::B && (!e.mark || *e.mark >= K))
      throw Error("labeled event " + std::to_string(e.id) + " has group outside 0.." +
                  std::to_string(K - 1));
}

// Initial group pattern: 1/K for unlabeled, indicator for labeled.
double initial_share(const EventRecord& e, int k, int K) {
  if (e.source == Source::A) return 1.0 / K;
  return *e.mark == k ? 1.0 : 0.0;
}

// Parent weights r_j(k), N x K. Unlabeled rows are renormalized so that
// K = 1 gives exactly 1.
std::vector<double> parent_weights(const MarkedDataset& data, const BranchingPosteriorMulti& P) {
  const std::size_t n = data.size();
  const int K = P.K();
  const auto Ku = static_cast<std::size_t>(K);
  std::vector<double> r(n * Ku, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& e = data[j];
    if (e.source == Source::B) {
      r[j * Ku + static_cast<std::size_t>(*e.mark)] = 1.0;
      continue;
    }
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
      const double s = P.responsibility(j, k);
      r[j * Ku + static_cast<std::size_t>(k)] = s;
      total += s;
    }
    for (std::size_t k = 0; k < Ku; ++k)
      r[j * Ku + k] = total > 0.0 ? r[j * Ku + k] / total : 1.0 / K;
  }
  return r;
}

BranchingPosteriorSingle empty_rows(std::size_t n) {
  BranchingPosteriorSingle P;
  P.diag.assign(n, 0.0);
  P.offsets.assign(n + 1, 0);
  return P;
}

}  // namespace

BranchingPosteriorMulti init_posteriors(const MarkedDataset& data, int K) {
  check_marks(data, K);
  BranchingPosteriorMulti P;
  P.groups.assign(static_cast<std::size_t>(K), empty_rows(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    for (int k = 0; k < K; ++k)
      P.groups[static_cast<std::size_t>(k)].diag[i] = initial_share(data[i], k, K);
  return P;
}

BranchingPosteriorMulti warm_start_multi(const MarkedDataset& data, int K,
                                         const FitScales& scales, const Truncation& truncation) {
  check_marks(data, K);
  const auto links = detail::warm_links(data, scales, truncation);
  const std::size_t n = data.size();
  BranchingPosteriorMulti P;
  P.groups.assign(static_cast<std::size_t>(K), empty_rows(n));
  for (int k = 0; k < K; ++k) {
    auto& G = P.groups[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < n; ++i) {
      const double ci = initial_share(data[i], k, K);
      if (ci > 0.0) {
        double S = 0.0;
        for (const auto& l : links[i]) S += initial_share(data[l.parent], k, K) * l.h;
        if (S > 0.0) {
          G.diag[i] = 0.5 * ci;
          for (const auto& l : links[i]) {
            const double cj = initial_share(data[l.parent], k, K);
            if (cj == 0.0) continue;
            G.parents.push_back(l.parent);
            G.probs.push_back(0.5 * ci * cj * l.h / S);
          }
        } else {
          G.diag[i] = ci;
        }
      }
      G.offsets[i + 1] = G.parents.size();
    }
  }
  return P;
}

BranchingPosteriorMulti e_step_multi(const MarkedDataset& data,
                                     std::span<const GroupParams> models,
                                     const BranchingPosteriorMulti& previous,
                                     const FitConfig& config, const FitScales& scales,
                                     EStepStats* stats) {
  const int K = static_cast<int>(models.size());
  const auto Ku = static_cast<std::size_t>(K);
  if (previous.K() != K) throw Error("e_step_multi: model and posterior group counts differ");
  check_marks(data, K);
  const std::size_t n = data.size();
  const Window& window = data.window();
  const auto r = parent_weights(data, previous);
  std::vector<detail::TriggerEval> kernels;
  for (const auto& m : models) kernels.emplace_back(m.trigger, config.truncation);

  struct GroupRow {
    double bg = 0.0;
    double lambda = 0.0;
    std::vector<std::uint32_t> parents;
    std::vector<double> terms;
  };
  struct Row {
    std::vector<GroupRow> g;
    bool clamped = false;
  };
  std::vector<Row> rows(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& ei = data[i];
    Row& row = rows[i];
    row.g.resize(Ku);
    double Z = 0.0;
    for (int k = 0; k < K; ++k) {
      if (ei.source == Source::B && *ei.mark != k) continue;
      const auto ku = static_cast<std::size_t>(k);
      GroupRow& gr = row.g[ku];
      gr.bg = detail::background_intensity(models[ku], window, ei.x, ei.y, ei.t, ei.id);
      double lambda = gr.bg;
      const auto& g = kernels[ku];
      if (g.active()) {
        for (std::size_t j = i; j-- > 0;) {
          const auto& ej = data[j];
          const double dt = ei.t - ej.t;
          if (dt <= 0.0) continue;
          if (dt > g.max_dt) break;
          const double rj = r[j * Ku + ku];
          if (rj == 0.0) continue;
          const double dx = ei.x - ej.x, dy = ei.y - ej.y;
          const double r2 = dx * dx + dy * dy;
          if (r2 > g.max_r2) continue;
          const double term = rj * g(r2, dt);
          if (term > 0.0) {
            gr.parents.push_back(static_cast<std::uint32_t>(j));
            gr.terms.push_back(term);
            lambda += term;
          }
        }
      }
      gr.lambda = lambda;
      Z += lambda;
    }
    if (Z < scales.lambda_floor) row.clamped = true;
    if (!(Z > 0.0)) {
      // Uniform fallback over the admissible groups.
      for (int k = 0; k < K; ++k) {
        auto& gr = row.g[static_cast<std::size_t>(k)];
        gr.parents.clear();
        gr.terms.clear();
        gr.bg = ei.source == Source::A ? 1.0 / K : (*ei.mark == k ? 1.0 : 0.0);
      }
      return;
    }
    for (auto& gr : row.g) {
      gr.bg /= Z;
      for (double& t : gr.terms) t /= Z;
    }
  });

  BranchingPosteriorMulti P;
  P.groups.assign(Ku, empty_rows(n));
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < Ku; ++k) {
      auto& G = P.groups[k];
      const auto& gr = rows[i].g[k];
      G.diag[i] = gr.bg;
      G.parents.insert(G.parents.end(), gr.parents.begin(), gr.parents.end());
      G.probs.insert(G.probs.end(), gr.terms.begin(), gr.terms.end());
      G.offsets[i + 1] = G.parents.size();
    }
    clamped += rows[i].clamped;
  }
  if (stats) stats->clamped += clamped;
  return P;
}

MStepMultiResult m_step_multi(const MarkedDataset& data, const BranchingPosteriorMulti& P,
                              const FitConfig& config, const FitScales& scales,
                              std::span<const Bandwidths> previous_bandwidths) {
  MStepMultiResult out;
  for (int k = 0; k < P.K(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto& G = P.groups[ku];
    const Bandwidths* prev = ku < previous_bandwidths.size() ? &previous_bandwidths[ku] : nullptr;
    MStepResult M = m_step(data, G, config, scales, prev);
    double mass = 0.0;
    for (std::size_t i = 0; i < G.size(); ++i) mass += G.row_sum(i);
    if (mass < 1.0) {
      // Frozen at priors; kept so group indices stay stable.
      M.params.empty = true;
      M.params.trigger = {0.0, scales.prior_omega, std::max(scales.prior_sigma, scales.sigma_floor)};
      M.no_trigger_mass = true;
    }
    out.groups.push_back(std::move(M.params));
    out.no_trigger_mass.push_back(M.no_trigger_mass);
  }
  return out;
}

double complete_data_loglik_multi(const MarkedDataset& data, const BranchingPosteriorMulti& P,
                                  std::span<const GroupParams> models, const Window& window,
                                  double lambda_floor) {
  if (static_cast<int>(models.size()) != P.K()) throw Error("group count mismatch");
  const std::size_t n = data.size();
  const auto r = P.responsibilities();
  const auto Ku = static_cast<std::size_t>(P.K());
  double ll = 0.0;
  for (std::size_t k = 0; k < Ku; ++k) {
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) w[j] = r[j * Ku + k];
    ll += detail::complete_data_loglik_weighted(data, P.groups[k], models[k], window,
                                                lambda_floor, &w, nullptr);
  }
  return ll;
}

FittedModel fit_fused(const MarkedDataset& data, int K, const FitConfig& config,
                      const FuseObserver* observer) {
  if (data.size() < 2) throw Error("fit_fused: need at least 2 events");
  if (config.max_iters < 1) throw Error("fit_fused: max_iters must be >= 1");
  if (!(config.tol > 0.0)) throw Error("fit_fused: tol must be positive");
  check_marks(data, K);

  FittedModel model;
  model.window = data.window();
  model.fused = true;

  std::vector<std::size_t> labeled(static_cast<std::size_t>(K), 0);
  for (const auto& e : data.events())
    if (e.source == Source::B) ++labeled[static_cast<std::size_t>(*e.mark)];
  for (std::size_t k = 0; k < labeled.size(); ++k)
    if (labeled[k] == 0 && data.count(Source::B) > 0) ++model.warnings;

  const FitScales scales = compute_scales(data, config);
  BranchingPosteriorMulti P = warm_start_multi(data, K, scales, config.truncation);

  EStepStats stats;
  std::vector<GroupParams> current;
  std::vector<double> previous;
  std::vector<Bandwidths> bws;
  int it = 1;
  for (;; ++it) {
    MStepMultiResult M = m_step_multi(data, P, config, scales, bws);
    bws.clear();
    for (const auto& g : M.groups) bws.push_back({g.background.b1(), g.background.b2()});
    current = std::move(M.groups);
    auto theta = detail::flatten_params(current);
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
    P = e_step_multi(data, current, P, config, scales, &stats);
    if (observer && observer->on_e_step) observer->on_e_step(it, P, current);
  }
  model.trace.iterations = it;

  // Responsibilities under the final parameters.
  const BranchingPosteriorMulti final_P = e_step_multi(data, current, P, config, scales, &stats);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& e = data[i];
    if (e.source != Source::A) continue;
    MarkAssignment a;
    a.id = e.id;
    a.resp.resize(static_cast<std::size_t>(K));
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
      a.resp[static_cast<std::size_t>(k)] = final_P.responsibility(i, k);
      total += a.resp[static_cast<std::size_t>(k)];
    }
    for (double& v : a.resp) v /= total;
    const auto best = std::max_element(a.resp.begin(), a.resp.end());
    a.group = static_cast<int>(best - a.resp.begin());
    a.prob = *best;
    model.assignments.push_back(std::move(a));
  }
  model.groups = std::move(current);
  const double n = static_cast<double>(data.size());
  model.share_a = static_cast<double>(data.count(Source::A)) / n;
  model.share_b = static_cast<double>(data.count(Source::B)) / n;
  model.warnings += stats.clamped;
  return model;
}

std::vector<InferredMark> infer_marks(const FittedModel& model) {
  if (!model.fused) throw Error("infer_marks: model was not fitted with fit_fused");
  std::vector<InferredMark> out;
  out.reserve(model.assignments.size());
  for (const auto& a : model.assignments) out.push_back({a.id, a.group, a.prob});
  return out;
}

std::vector<double> estimated_group_sizes(const MarkedDataset& data, const FittedModel& model) {
  const auto K = static_cast<std::size_t>(model.K());
  std::vector<double> sizes(K, 0.0);
  for (const auto& e : data.events())
    if (e.source == Source::B && e.mark) sizes[static_cast<std::size_t>(*e.mark)] += 1.0;
  if (K == 1) {
    sizes[0] += static_cast<double>(data.count(Source::A));
    return sizes;
  }
  for (const auto& a : model.assignments)
    for (std::size_t k = 0; k < K; ++k) sizes[k] += a.resp[k];
  return sizes;
}

}  // namespace sepp
