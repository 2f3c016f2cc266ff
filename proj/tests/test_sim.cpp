#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sepp/error.hpp"
#include "sepp/sim.hpp"
#include "support.hpp"

using namespace sepp;

TEST(Sim, ReferenceConfigurationTable) {
  const auto c = reference_config();
  ASSERT_EQ(c.groups.size(), 4u);
  EXPECT_EQ(c.groups[1].trigger.sigma, 0.001);
  EXPECT_EQ(c.groups[3].mu, 132.0);
  EXPECT_EQ(c.groups[2].bg, (std::array<double, 4>{0.4, 0.4, 0.1, 0.1}));
  EXPECT_EQ(c.T, 1000.0);
  EXPECT_NO_THROW(c.validate());
}

TEST(Sim, BackgroundCountIsPoisson) {
  GroupSimSpec spec;
  spec.mu = 50.0;
  Rng rng(1);
  double total = 0.0;
  const int draws = 400;
  for (int i = 0; i < draws; ++i)
    total += static_cast<double>(simulate_background(spec, 100.0, rng).size());
  EXPECT_NEAR(total / draws, 50.0, 3.0 * std::sqrt(50.0 / draws));
}

TEST(Sim, BackgroundQuadrants) {
  GroupSimSpec spec;
  spec.bg = {0.1, 0.2, 0.3, 0.4};
  spec.mu = 40000.0;
  const auto e = simulate_background(spec, 10.0, std::uint64_t{2});
  std::array<double, 4> share{};
  for (const auto& x : e) {
    ASSERT_GE(x.x, 0.0);
    ASSERT_LE(x.x, 1.0);
    ASSERT_GE(x.t, 0.0);
    ASSERT_LE(x.t, 10.0);
    const bool top = x.y >= 0.5, left = x.x < 0.5;
    share[top ? (left ? 0 : 1) : (left ? 2 : 3)] += 1.0 / static_cast<double>(e.size());
  }
  for (int q = 0; q < 4; ++q) EXPECT_NEAR(share[q], spec.bg[q], 0.01);
}

TEST(Sim, OffspringMoments) {
  const TriggerParams p{0.5, 2.0, 0.1};
  Rng rng(3);
  double children = 0.0, delay = 0.0, dx2 = 0.0;
  std::size_t direct = 0;
  const int parents = 20000;
  for (int i = 0; i < parents; ++i) {
    const SimEvent parent{0.0, 0.0, 0.0, 0, -1};
    const auto kids = simulate_offspring(parent, 0, 1, p, 1e9, rng);
    for (const auto& k : kids) {
      if (k.parent != 0) continue;
      ++direct;
      delay += k.t;
      dx2 += k.x * k.x;
    }
    children += static_cast<double>(kids.size());
  }
  EXPECT_NEAR(static_cast<double>(direct) / parents, 0.5, 0.02);
  EXPECT_NEAR(delay / static_cast<double>(direct), 0.5, 0.02);
  EXPECT_NEAR(std::sqrt(dx2 / static_cast<double>(direct)), 0.1, 0.005);
  // Whole cascade: K0 / (1 - K0) descendants per parent.
  EXPECT_NEAR(children / parents, 1.0, 0.06);
}

TEST(Sim, OffspringPastHorizonAreDropped) {
  Rng rng(4);
  const SimEvent parent{9.99, 0.5, 0.5, 0, -1};
  const auto kids = simulate_offspring(parent, 0, 1, {0.9, 0.01, 0.1}, 10.0, rng);
  for (const auto& k : kids) EXPECT_LE(k.t, 10.0);
}

TEST(Sim, SupercriticalCascadeIsCapped) {
  Rng rng(5);
  const SimEvent parent{0.0, 0.5, 0.5, 0, -1};
  try {
    simulate_offspring(parent, 0, 1, {8.0, 1.0, 0.1}, 1e9, rng, 1000);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("supercritical"), std::string::npos);
  }
}

TEST(Sim, DatasetIsDeterministicAndConsistent) {
  const auto c = reference_config(0.3, 77);
  const auto a = simulate_dataset(c);
  const auto b = simulate_dataset(c);
  ASSERT_EQ(a.dataset.size(), b.dataset.size());
  for (std::size_t i = 0; i < a.dataset.size(); ++i) {
    EXPECT_EQ(a.dataset[i].t, b.dataset[i].t);
    EXPECT_EQ(a.dataset[i].x, b.dataset[i].x);
    EXPECT_EQ(a.dataset[i].source, b.dataset[i].source);
  }
  const auto other = simulate_dataset(reference_config(0.3, 78));
  EXPECT_NE(other.dataset.size() == a.dataset.size() && other.dataset[0].t == a.dataset[0].t,
            true);

  const auto& d = a.dataset;
  EXPECT_EQ(std::accumulate(a.true_counts.begin(), a.true_counts.end(), std::size_t{0}), d.size());
  EXPECT_NEAR(static_cast<double>(d.count(Source::A)) / static_cast<double>(d.size()), 0.3, 0.05);
  ASSERT_EQ(a.truth.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& t = a.truth[i];
    EXPECT_EQ(t.id, d[i].id);
    EXPECT_EQ(t.true_group, a.true_marks[i]);
    if (d[i].source == Source::B) EXPECT_EQ(*d[i].mark, t.true_group);
    if (d[i].source == Source::A) EXPECT_FALSE(d[i].mark);
    if (t.parent_id >= 0) {
      const auto p = static_cast<std::size_t>(t.parent_id);
      EXPECT_LE(d[p].t, d[i].t);
      EXPECT_EQ(a.truth[p].true_group, t.true_group);
    }
    EXPECT_TRUE(d.window().contains(d[i]));
  }
  EXPECT_EQ(d.window().t0, 0.0);
  EXPECT_EQ(d.window().t1, 1000.0);
}

TEST(Sim, TruthSidecar) {
  const auto a = simulate_dataset(reference_config(0.3, 8));
  const auto dir = testing_support::temp_dir("truth");
  save_truth(dir / "truth.csv", a.truth);
  std::ifstream in(dir / "truth.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "id,true_group,parent_id");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, a.dataset.size());
}

TEST(Sim, SeedsAndValidation) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(9, 4), derive_seed(9, 4));
  GroupSimSpec bad;
  bad.bg = {0.5, 0.5, 0.5, 0.0};
  EXPECT_THROW(bad.validate(), Error);
  SimConfig c = reference_config();
  c.unlabeled_fraction = 1.5;
  EXPECT_THROW(simulate_dataset(c), Error);
  c = reference_config();
  c.groups.clear();
  EXPECT_THROW(simulate_dataset(c), Error);
}
