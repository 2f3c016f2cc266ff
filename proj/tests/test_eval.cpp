#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sepp/error.hpp"
#include "sepp/eval.hpp"
#include "sepp/fuse.hpp"
#include "support.hpp"

using namespace sepp;
using namespace testing_support;

namespace {

FittedModel uniform_model(const Window& w, double rate) {
  FittedModel m;
  m.window = w;
  GroupParams g;
  g.trigger = {0.0, 1.0, 1.0};
  g.mu0 = rate * w.volume();
  g.uniform_background = true;
  m.groups = {g};
  return m;
}

// Parent weights the evaluator should use for a fused model.
std::vector<std::vector<double>> model_weights(const MarkedDataset& d, const FittedModel& m) {
  std::vector<std::vector<double>> r;
  for (const auto& e : d.events()) {
    std::vector<double> row(static_cast<std::size_t>(m.K()), 0.0);
    if (m.K() == 1) {
      row[0] = 1.0;
    } else if (e.mark) {
      row[static_cast<std::size_t>(*e.mark)] = 1.0;
    } else {
      for (const auto& a : m.assignments)
        if (a.id == e.id) row = a.resp;
    }
    r.push_back(row);
  }
  return r;
}

std::vector<oracle::Group> oracle_groups(const FittedModel& m) {
  std::vector<oracle::Group> out;
  for (const auto& g : m.groups) out.push_back(to_oracle(g));
  return out;
}

EvalOptions untruncated() {
  EvalOptions o;
  o.truncation.enabled = false;
  return o;
}

}  // namespace

TEST(ObservedLoglik, HomogeneousPoissonClosedForm) {
  const Window w{0, 20, 0, 2, 0, 1};
  std::vector<EventRecord> e;
  for (int i = 0; i < 7; ++i) e.push_back(ev(i, 1.0 + 2.5 * i, 0.3 * i, 0.5));
  const MarkedDataset d(e, w, 1);
  const double r = 0.2;
  const auto m = uniform_model(w, r);
  EXPECT_NEAR(observed_loglik(d, m, w, Subset::all), 7.0 * std::log(r) - r * w.volume(), 1e-12);
}

TEST(ObservedLoglik, ExtraHistoryDoesNotMoveAPureBackgroundModel) {
  const auto d = hand_dataset(2);
  auto m = fit_fused(d, 2);
  for (auto& g : m.groups) g.trigger.K0 = 0.0;
  std::vector<EventRecord> more(d.events().begin(), d.events().end());
  more.push_back(ev(100, 5.5, 0.5, 0.5, 1));
  more.push_back(ev(101, 7.5, 0.1, 0.9, 0));
  const MarkedDataset bigger(more, d.window(), 2);
  EXPECT_DOUBLE_EQ(observed_loglik(d, m, d.window(), Subset::A),
                   observed_loglik(bigger, m, d.window(), Subset::A));
}

TEST(ObservedLoglik, MatchesTermByTermOracle) {
  const auto d = hand_dataset(2);
  const auto m = fit_fused(d, 2);
  const auto ev_o = to_oracle(d);
  const auto r = model_weights(d, m);
  const auto Gs = oracle_groups(m);
  const Window& w = d.window();
  for (Subset s : {Subset::A, Subset::B, Subset::all}) {
    std::vector<bool> score;
    for (const auto& e : d.events())
      score.push_back(s == Subset::all || (s == Subset::A) == (e.source == Source::A));
    const double share = s == Subset::A ? m.share_a : s == Subset::B ? m.share_b : 1.0;
    const double ref =
        oracle::observed_loglik(ev_o, Gs, r, score, s == Subset::B, share, w.t0, w.t1);
    const double lib = observed_loglik(d, m, w, s, untruncated());
    EXPECT_NEAR(lib, ref, 1e-10 * std::abs(ref)) << to_string(s);
  }
}

TEST(ObservedLoglik, FarFutureEventIsLocal) {
  const Window w{0, 100, 0, 1, 0, 1};
  const auto base = hand_dataset(2);
  const MarkedDataset d(std::vector<EventRecord>(base.events().begin(), base.events().end()), w, 2);
  auto m = fit_fused(d, 2);
  // Flat backgrounds keep every intensity well above the floor.
  for (auto& g : m.groups) g.uniform_background = true;
  std::vector<EventRecord> more(d.events().begin(), d.events().end());
  const EventRecord late = ev(50, 95.0, 0.05, 0.95, 1);
  more.push_back(late);
  const MarkedDataset d2(more, w, 2);
  const double before = observed_loglik(d, m, w, Subset::all, untruncated());
  const double after = observed_loglik(d2, m, w, Subset::all, untruncated());
  const IntensityField field(m, d2, untruncated());
  double lam = 0.0;
  for (int k = 0; k < 2; ++k) lam += field.group_intensity(k, late.x, late.y, late.t, late.id);
  const auto& g = m.groups[1].trigger;
  const double added = g.K0 * -std::expm1(-g.omega * (w.t1 - late.t));
  EXPECT_NEAR(after - before, std::log(lam) - added, 1e-9);
}

TEST(ObservedLoglik, MissingResponsibilitiesAreAnError) {
  const auto d = hand_dataset(2);
  auto m = fit_fused(d, 2);
  m.assignments.clear();
  EXPECT_THROW(observed_loglik(d, m, d.window(), Subset::A), Error);
  auto single = fit(hand_dataset(1));
  single.share_b = 0.0;
  EXPECT_THROW(observed_loglik(hand_dataset(1), single, single.window, Subset::B), Error);
}

TEST(Aic, Examples) {
  EXPECT_EQ(aic(49892.0, 4), -99776.0);
  EXPECT_EQ(aic(0.0, 16), 32.0);
  EXPECT_LT(aic(10.0, 4), aic(9.0, 4));
  EXPECT_THROW(aic(1.0, 0), Error);
}

TEST(Grid, ScoresEqualDirectIntensityAtCenters) {
  const Window w{0, 10, 0, 3, 0, 3};
  const MarkedDataset hist({ev(0, 1.2, 1.4, 1.6, 0), ev(1, 2.7, 0.4, 2.2, 0)}, w, 1);
  FittedModel m;
  m.window = w;
  GroupParams g;
  g.trigger = {0.6, 0.5, 0.7};
  g.mu0 = 4.0;
  g.background = KdeBackground({{2.0, 1.0, 1.0, 1.0, -1}, {6.0, 2.5, 0.5, 2.0, -1}}, 1.5, 0.8);
  m.groups = {g};
  GridOptions opt;
  opt.G = 3;
  const auto f = grid_forecast(m, hist, 4, opt, untruncated());
  const auto Gs = oracle_groups(m);
  const std::vector<std::vector<double>> r{{1.0}, {1.0}};
  for (int cy = 0; cy < 3; ++cy)
    for (int cx = 0; cx < 3; ++cx) {
      const double ref = oracle::intensity(to_oracle(hist), Gs, r, 0, 4.0, cx + 0.5, cy + 0.5,
                                           std::nullopt);
      EXPECT_NEAR(f.scores[static_cast<std::size_t>(cy * 3 + cx)], ref, 1e-10 * ref);
    }
}

TEST(Grid, FlatModelGivesEqualScores) {
  const Window w{0, 10, 0, 1, 0, 1};
  const MarkedDataset hist({ev(0, 1.0, 0.5, 0.5), ev(1, 4.5, 0.2, 0.2)}, w, 1);
  const auto m = uniform_model(w, 3.0);
  GridOptions opt;
  opt.G = 5;
  const auto f = grid_forecast(m, hist, 4, opt);
  for (double s : f.scores) EXPECT_EQ(s, f.scores[0]);
  EXPECT_EQ(f.labels[static_cast<std::size_t>(1 * 5 + 1)], 1);
}

TEST(Grid, PeakedKernelPointsAtThePastEvent) {
  const Window w{0, 10, 0, 1, 0, 1};
  const MarkedDataset hist({ev(0, 2.5, 0.73, 0.27)}, w, 1);
  auto m = uniform_model(w, 0.01);
  m.groups[0].trigger = {0.8, 0.5, 0.03};
  GridOptions opt;
  opt.G = 10;
  const auto f = grid_forecast(m, hist, 3, opt);
  const auto best = std::max_element(f.scores.begin(), f.scores.end()) - f.scores.begin();
  EXPECT_EQ(best, 2 * 10 + 7);
  for (double s : f.scores) {
    EXPECT_GE(s, 0.0);
    EXPECT_TRUE(std::isfinite(s));
  }
}

TEST(Grid, EmptyHistoryIsBackgroundOnly) {
  const Window w{0, 10, 0, 1, 0, 1};
  const MarkedDataset empty({}, w, 1);
  auto m = uniform_model(w, 2.0);
  m.groups[0].trigger = {0.8, 0.5, 0.03};
  const auto f = grid_forecast(m, empty, 3, GridOptions{});
  for (double s : f.scores) EXPECT_DOUBLE_EQ(s, 2.0);
}

TEST(Auc, SimpleCases) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8, 0.7, 0.2};
  const std::vector<std::uint8_t> l{0, 1, 0, 1, 0, 0};
  EXPECT_EQ(auc(s, l), oracle::auc_pairs(s, l));
  EXPECT_EQ(auc(std::vector<double>{1, 2, 3, 4}, std::vector<std::uint8_t>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(auc(std::vector<double>(5, 2.0), std::vector<std::uint8_t>{0, 1, 0, 1, 1}), 0.5);
  try {
    auc(std::vector<double>{1, 2}, std::vector<std::uint8_t>{1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "degenerate labels");
  }
}

TEST(Auc, RandomInstancesMatchPairwiseCount) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> level(0, 20);
  std::bernoulli_distribution pos(0.3);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng() % 999);
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = level(rng) * 0.1;
      l[i] = pos(rng);
    }
    l[0] = 1;
    l[1] = 0;
    EXPECT_EQ(auc(s, l), oracle::auc_pairs(s, l));
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
    EXPECT_EQ(auc(t, l), auc(s, l));
    std::vector<std::uint8_t> flip(n);
    for (std::size_t i = 0; i < n; ++i) flip[i] = 1 - l[i];
    EXPECT_NEAR(auc(s, l) + auc(s, flip), 1.0, 1e-12);
  }
}

TEST(Branching, AccessorsAndFlags) {
  FittedModel m;
  m.groups.resize(2);
  m.groups[0].trigger.K0 = 0.72;
  m.groups[1].trigger.K0 = 1.3;
  const auto b = branching_ratio(m);
  EXPECT_EQ(b[0].K0, 0.72);
  EXPECT_TRUE(b[0].subcritical);
  EXPECT_FALSE(b[1].subcritical);
  EXPECT_EQ(model_df(m), 8);
}

TEST(Compare, IdenticalModelsGiveIdenticalRows) {
  const auto d = hand_dataset(2);
  const auto m = fit_fused(d, 2);
  const std::vector<NamedModel> models{{"x", &m, std::nullopt}, {"y", &m, std::nullopt}};
  CompareOptions opt;
  opt.subsets = {Subset::A, Subset::B, Subset::all};
  const auto rows = compare_models(d, models, opt);
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rows[i].loglik, rows[i + 3].loglik);
    EXPECT_EQ(rows[i].aic, rows[i + 3].aic);
  }
  for (const auto& r : rows) EXPECT_NEAR(r.aic, 2.0 * r.df - 2.0 * r.loglik, 1e-9);
  std::ostringstream out;
  write_score_report(out, rows);
  EXPECT_EQ(out.str().rfind("model,subset,loglik,df,aic,auc\n", 0), 0u);
}

TEST(Compare, BaselinesOnlyScoreTheirOwnSource) {
  const auto d = hand_dataset(2);
  const auto m = fit_fused(d, 2);
  const auto base = fit_baselines(d, 2);
  const std::vector<NamedModel> models{{"fused", &m, std::nullopt},
                                       {"A-only", &base.a_only, Source::A},
                                       {"B-only", &base.b_only, Source::B}};
  CompareOptions opt;
  opt.subsets = {Subset::A, Subset::B, Subset::all};
  const auto rows = compare_models(d, models, opt);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[3].model, "A-only");
  EXPECT_EQ(rows[3].subset, Subset::A);
  EXPECT_EQ(rows[4].subset, Subset::B);
}

TEST(Forecast, SingleCellEveryDayIsDegenerate) {
  const Window w{0, 10, 0, 1, 0, 1};
  std::vector<EventRecord> e;
  for (int i = 0; i < 10; ++i) e.push_back(ev(i, i + 0.5, 0.5, 0.5));
  const MarkedDataset d(e, w, 1);
  const auto m = fit(d);
  GridOptions opt;
  opt.G = 1;
  EXPECT_THROW(forecast_auc(m, d, opt), Error);
}
