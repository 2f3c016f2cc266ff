#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "planted.hpp"
#include "sepp/error.hpp"
#include "sepp/nmf.hpp"

using namespace sepp;

namespace {

bool nonincreasing(const std::vector<double>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] > trace[i - 1] + 1e-10 * std::max(1.0, trace[i - 1])) return false;
  return true;
}

}  // namespace

TEST(Nmf, ObjectiveNeverIncreases) {
  const auto tox = planted::tox(planted::make());
  for (int K : {2, 4, 6}) {
    const auto F = factorize(tox.V, K, 17, {200, 3});
    ASSERT_EQ(F.run_traces.size(), 3u);
    for (const auto& t : F.run_traces) EXPECT_TRUE(nonincreasing(t));
    EXPECT_TRUE((F.W.array() >= 0.0).all());
    EXPECT_TRUE((F.H.array() >= 0.0).all());
  }
}

TEST(Nmf, DeterministicForSeed) {
  const auto tox = planted::tox(planted::make());
  const auto a = factorize(tox.V, 4, 5);
  const auto b = factorize(tox.V, 4, 5);
  EXPECT_TRUE(a.W == b.W);
  EXPECT_TRUE(a.H == b.H);
  const auto c = factorize(tox.V, 4, 6);
  EXPECT_FALSE(a.W == c.W);
}

TEST(Nmf, PlantedBlocksSelectFourAndRecoverExactly) {
  const auto table = planted::make();
  const auto tox = planted::tox(table);
  std::vector<int> ks{2, 3, 4, 5, 6, 7, 8};
  const auto sel = select_k(tox, ks, 3);
  EXPECT_EQ(sel.best_k, 4);
  const auto F = factorize(tox.V, 4, 3);
  const auto labels = assign_clusters(F);
  EXPECT_EQ(labels.zero_columns, 0u);
  // Same partition up to relabeling.
  std::map<int, int> to_block;
  for (std::size_t n = 0; n < labels.labels.size(); ++n) {
    const int b = table.block[n];
    const auto [it, fresh] = to_block.emplace(labels.labels[n], b);
    EXPECT_EQ(it->second, b);
  }
  EXPECT_EQ(to_block.size(), 4u);
}

TEST(Coherence, MatchesHandComputation) {
  std::istringstream in("id,a,b,c\n1,1,1,0\n2,1,0,0\n3,1,1,1\n4,0,0,1\n");
  const auto tox = parse_tox(in);
  NmfFactors F;
  F.W = Eigen::MatrixXd(3, 1);
  F.W << 0.9, 0.5, 0.1;  // ranking a, b, c
  F.H = Eigen::MatrixXd::Ones(1, 4);
  const auto s = coherence(F, tox, 3);
  // D(a)=3, D(b)=2, D(ab)=2, D(ac)=1, D(bc)=1.
  const double expect =
      std::log((2.0 + 1.0) / 3.0) + std::log((1.0 + 1.0) / 3.0) + std::log((1.0 + 1.0) / 2.0);
  EXPECT_NEAR(s.per_topic[0], expect, 1e-12);
  EXPECT_NEAR(s.mean, expect, 1e-12);
}

TEST(TopTerms, TiesBreakByName) {
  NmfFactors F;
  F.W = Eigen::MatrixXd(3, 1);
  F.W << 0.5, 0.5, 0.9;
  F.H = Eigen::MatrixXd::Ones(1, 2);
  const auto t = top_terms(F, {"zeta", "alpha", "mid"}, 3);
  EXPECT_EQ(t[0], (std::vector<std::string>{"mid", "alpha", "zeta"}));
  EXPECT_THROW(top_terms(F, {"a", "b", "c"}, 4), Error);
}

TEST(Nmf, RejectsBadInput) {
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(3, 3);
  EXPECT_THROW(factorize(V, 2, 1), Error);
  V(0, 0) = -1.0;
  V(1, 1) = 1.0;
  EXPECT_THROW(factorize(V, 2, 1), Error);
  V(0, 0) = 1.0;
  EXPECT_THROW(factorize(V, 4, 1), Error);
  EXPECT_THROW(factorize(V, 0, 1), Error);
  const auto tox = planted::tox(planted::make());
  EXPECT_THROW(select_k(tox, {}, 1), Error);
}

TEST(SelectK, SingleCandidateIsReturned) {
  const auto tox = planted::tox(planted::make());
  const auto sel = select_k(tox, {3}, 1);
  EXPECT_EQ(sel.best_k, 3);
  EXPECT_EQ(sel.ks.size(), 1u);
}
