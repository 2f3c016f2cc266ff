#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sepp/em.hpp"
#include "sepp/error.hpp"
#include "sepp/parallel.hpp"
#include "sepp/sim.hpp"
#include "support.hpp"

using namespace sepp;
using namespace testing_support;

namespace {

GroupParams hand_params(const MarkedDataset& d) {
  std::vector<double> w;
  for (std::size_t i = 0; i < d.size(); ++i) w.push_back(0.3 + 0.05 * static_cast<double>(i));
  return hand_group(d, w, 0.6, 0.8, 0.12, 1.5, 0.2);
}

MarkedDataset single_group_sim(std::uint64_t seed) {
  SimConfig c = reference_config(1.0, seed);
  c.groups = {c.groups[0]};
  return simulate_dataset(c).dataset;
}

}  // namespace

TEST(EStep, MatchesDenseOracle) {
  const auto d = hand_dataset(1);
  const auto params = hand_params(d);
  FitConfig cfg;
  cfg.truncation.enabled = false;
  const auto scales = compute_scales(d, cfg);
  const auto P = to_dense(e_step(d, params, cfg, scales));
  const auto Q = oracle::e_step_single(to_oracle(d), to_oracle(params));
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j <= d.size(); ++j) EXPECT_NEAR(P[i][j], Q[i][j], 1e-10);
}

TEST(EStep, RowsAreStochastic) {
  const auto d = single_group_sim(3);
  const auto params = hand_group(d, std::vector<double>(d.size(), 0.5), 0.8, 0.1, 0.01, 20, 0.05);
  const FitConfig cfg;
  const auto P = e_step(d, params, cfg, compute_scales(d, cfg));
  for (std::size_t i = 0; i < P.size(); ++i) EXPECT_NEAR(P.row_sum(i), 1.0, 1e-10);
}

TEST(EStep, ZeroIntensityEverywhereIsAnError) {
  const auto d = hand_dataset(1);
  GroupParams g = hand_params(d);
  g.mu0 = 0.0;
  g.trigger.K0 = 0.0;
  const FitConfig cfg;
  EXPECT_THROW(e_step(d, g, cfg, compute_scales(d, cfg)), Error);
}

TEST(MStep, MatchesDenseOracle) {
  const auto d = hand_dataset(1);
  FitConfig cfg;
  cfg.truncation.enabled = false;
  const auto scales = compute_scales(d, cfg);
  const auto P = e_step(d, hand_params(d), cfg, scales);
  const auto M = m_step(d, P, cfg, scales);
  const auto ref = oracle::m_step_single(to_oracle(d), to_dense(P));
  EXPECT_NEAR(M.params.trigger.K0, ref.K0, 1e-10 * ref.K0);
  EXPECT_NEAR(M.params.trigger.omega, ref.omega, 1e-10 * ref.omega);
  EXPECT_NEAR(M.params.trigger.sigma, ref.sigma, 1e-10 * ref.sigma);
  EXPECT_NEAR(M.params.mu0, ref.mu0, 1e-10 * ref.mu0);
  const auto pts = M.params.background.points();
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(pts[i].w, ref.weights[i], 1e-12);
  const auto o = to_oracle(d);
  const double b1 = oracle::knn_bandwidth(ref.weights, cfg.bandwidth.k, [&](auto i, auto j) {
    return std::abs(o[i].t - o[j].t);
  });
  const double b2 = oracle::knn_bandwidth(ref.weights, cfg.bandwidth.k, [&](auto i, auto j) {
    return std::hypot(o[i].x - o[j].x, o[i].y - o[j].y);
  });
  EXPECT_NEAR(M.params.background.b1(), b1, 1e-10 * b1);
  EXPECT_NEAR(M.params.background.b2(), b2, 1e-10 * b2);
}

TEST(MStep, NoTriggeringMassFallsBackToPriors) {
  const auto d = hand_dataset(1);
  BranchingPosteriorSingle P;
  P.diag.assign(d.size(), 1.0);
  P.offsets.assign(d.size() + 1, 0);
  FitConfig cfg;
  cfg.prior_omega = 2.5;
  cfg.prior_sigma = 0.3;
  const auto M = m_step(d, P, cfg, compute_scales(d, cfg));
  EXPECT_TRUE(M.no_trigger_mass);
  EXPECT_EQ(M.params.trigger.K0, 0.0);
  EXPECT_EQ(M.params.trigger.omega, 2.5);
  EXPECT_EQ(M.params.trigger.sigma, 0.3);
  EXPECT_EQ(M.params.mu0, static_cast<double>(d.size()));
}

TEST(CompleteLoglik, SingleEventExpansion) {
  const MarkedDataset d({ev(0, 2.0, 0.4, 0.6)}, Window{0, 1e9, 0, 1, 0, 1}, 1);
  GroupParams g;
  g.trigger = {0.35, 1.0, 0.1};
  g.mu0 = 1.0;
  // Support not tied to the event, so nothing is left out.
  g.background = KdeBackground({{1.5, 0.5, 0.5, 1.0, -1}}, 0.8, 0.3);
  BranchingPosteriorSingle P;
  P.diag = {1.0};
  P.offsets = {0, 0};
  const double uv = kde_space(0.4, 0.6, g.background) * kde_time(2.0, g.background);
  EXPECT_NEAR(complete_data_loglik(d, P, g, d.window(), 1e-300), std::log(uv) - 1.0 - 0.35,
              1e-12);
}

TEST(CompleteLoglik, MatchesTermByTermOracle) {
  const auto d = hand_dataset(1);
  FitConfig cfg;
  cfg.truncation.enabled = false;
  const auto params = hand_params(d);
  const auto P = e_step(d, params, cfg, compute_scales(d, cfg));
  const double lib = complete_data_loglik(d, P, params, d.window(), 1e-300);
  const double ref = oracle::complete_loglik(to_oracle(d), to_dense(P), to_oracle(params), 10.0);
  EXPECT_NEAR(lib, ref, 1e-12 * std::abs(ref));
}

TEST(CompleteLoglik, ClampedLogsAreCounted) {
  const auto d = hand_dataset(1);
  const auto params = hand_params(d);
  const FitConfig cfg;
  const auto P = e_step(d, params, cfg, compute_scales(d, cfg));
  std::size_t floored = 0;
  complete_data_loglik(d, P, params, d.window(), 1e300, &floored);
  EXPECT_GT(floored, 0u);
}

TEST(Fit, RecoversSingleGroupTruth) {
  double K0 = 0.0, omega = 0.0, sigma = 0.0, mu0 = 0.0;
  const int reps = 3;
  for (int r = 0; r < reps; ++r) {
    const auto d = single_group_sim(derive_seed(11, static_cast<std::uint64_t>(r)));
    const auto m = fit(d);
    EXPECT_TRUE(m.trace.converged);
    K0 += m.groups[0].trigger.K0 / reps;
    omega += m.groups[0].trigger.omega / reps;
    sigma += m.groups[0].trigger.sigma / reps;
    mu0 += m.groups[0].mu0 / reps;
  }
  EXPECT_NEAR(K0, 0.9, 0.2 * 0.9);
  EXPECT_NEAR(omega, 0.1, 0.2 * 0.1);
  EXPECT_NEAR(sigma, 0.01, 0.2 * 0.01);
  EXPECT_NEAR(mu0, 67.0, 0.2 * 67.0);
}

TEST(Fit, DeterministicAcrossRunsAndThreadCounts) {
  const auto d = single_group_sim(21);
  set_thread_count(1);
  const auto a = fit(d);
  set_thread_count(4);
  const auto b = fit(d);
  set_thread_count(1);
  ASSERT_EQ(a.trace.params.size(), b.trace.params.size());
  for (std::size_t i = 0; i < a.trace.params.size(); ++i)
    EXPECT_EQ(a.trace.params[i], b.trace.params[i]);
}

TEST(Fit, TranslationInvariant) {
  const auto d = single_group_sim(31);
  std::vector<EventRecord> shifted(d.events().begin(), d.events().end());
  for (auto& e : shifted) {
    e.t += 250.0;
    e.x += 3.0;
    e.y -= 2.0;
  }
  const Window w = d.window();
  const MarkedDataset s(shifted, Window{w.t0 + 250, w.t1 + 250, w.x0 + 3, w.x1 + 3, w.y0 - 2, w.y1 - 2},
                        1);
  const auto a = fit(d).groups[0].trigger;
  const auto b = fit(s).groups[0].trigger;
  EXPECT_NEAR(b.K0, a.K0, 1e-8 * a.K0);
  EXPECT_NEAR(b.omega, a.omega, 1e-8 * a.omega);
  EXPECT_NEAR(b.sigma, a.sigma, 1e-8 * a.sigma);
}

TEST(Fit, ConvergedPointIsAFixedPoint) {
  const auto d = single_group_sim(41);
  const FitConfig cfg;
  const auto m = fit(d, cfg);
  ASSERT_TRUE(m.trace.converged);
  const auto scales = compute_scales(d, cfg);
  const auto P = e_step(d, m.groups[0], cfg, scales);
  const auto M = m_step(d, P, cfg, scales);
  const std::vector<double> a{m.groups[0].trigger.K0, m.groups[0].trigger.omega,
                              m.groups[0].trigger.sigma, m.groups[0].mu0};
  const std::vector<double> b{M.params.trigger.K0, M.params.trigger.omega,
                              M.params.trigger.sigma, M.params.mu0};
  EXPECT_LT(max_relative_change(a, b), cfg.tol);
}

TEST(Fit, RowsStayStochasticEveryIteration) {
  const auto d = single_group_sim(51);
  EmObserver obs;
  double worst = 0.0;
  int calls = 0;
  obs.on_e_step = [&](int, const BranchingPosteriorSingle& P, const GroupParams&) {
    ++calls;
    for (std::size_t i = 0; i < P.size(); ++i) worst = std::max(worst, std::abs(P.row_sum(i) - 1));
  };
  fit(d, {}, &obs);
  EXPECT_GT(calls, 0);
  EXPECT_LE(worst, 1e-10);
}

TEST(Fit, RejectsBadInput) {
  const MarkedDataset one({ev(0, 1.0, 0.5, 0.5)}, Window{0, 10, 0, 1, 0, 1}, 1);
  EXPECT_THROW(fit(one), Error);
  FitConfig cfg;
  cfg.max_iters = 0;
  EXPECT_THROW(fit(hand_dataset(1), cfg), Error);
}

TEST(Fit, RelativeChange) {
  const std::vector<double> a{1.0, 2.0, 0.0};
  const std::vector<double> b{1.1, 2.0, 0.0};
  EXPECT_NEAR(max_relative_change(a, b), 0.1, 1e-12);
  EXPECT_THROW(max_relative_change(a, std::vector<double>{1.0}), Error);
}
