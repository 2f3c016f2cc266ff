#pragma once

// Conversions between library types and the plain oracle structs, plus small
// hand datasets shared by the unit tests.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sepp/data.hpp"
#include "sepp/em.hpp"
#include "sepp/model.hpp"

namespace testing_support {

inline std::vector<oracle::Ev> to_oracle(const sepp::MarkedDataset& d) {
  std::vector<oracle::Ev> out;
  for (const auto& e : d.events())
    out.push_back({e.id, e.t, e.x, e.y, e.source == sepp::Source::B, e.mark.value_or(-1)});
  return out;
}

inline oracle::Group to_oracle(const sepp::GroupParams& g) {
  oracle::Group o;
  o.K0 = g.trigger.K0;
  o.omega = g.trigger.omega;
  o.sigma = g.trigger.sigma;
  o.mu0 = g.mu0;
  o.b1 = g.background.b1();
  o.b2 = g.background.b2();
  for (const auto& p : g.background.points()) o.pts.push_back({p.t, p.x, p.y, p.w, p.id});
  return o;
}

inline oracle::Dense to_dense(const sepp::BranchingPosteriorSingle& P) {
  const std::size_t n = P.size();
  oracle::Dense D(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    D[i][n] = P.diag[i];
    const auto parents = P.parents_of(i);
    const auto probs = P.probs_of(i);
    for (std::size_t m = 0; m < parents.size(); ++m) D[i][parents[m]] = probs[m];
  }
  return D;
}

// Group whose KDE support is the dataset itself with the given weights.
inline sepp::GroupParams hand_group(const sepp::MarkedDataset& d, const std::vector<double>& w,
                                    double K0, double omega, double sigma, double b1, double b2) {
  std::vector<sepp::SupportPoint> pts;
  double Nb = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    pts.push_back({d[i].t, d[i].x, d[i].y, w[i], d[i].id});
    Nb += w[i];
  }
  sepp::GroupParams g;
  g.trigger = {K0, omega, sigma};
  g.background = sepp::KdeBackground(std::move(pts), b1, b2);
  g.mu0 = Nb;
  return g;
}

inline sepp::EventRecord ev(std::int64_t id, double t, double x, double y,
                            std::optional<int> mark = std::nullopt) {
  sepp::EventRecord e;
  e.id = id;
  e.t = t;
  e.x = x;
  e.y = y;
  e.source = mark ? sepp::Source::B : sepp::Source::A;
  e.mark = mark;
  return e;
}

// Eight events in the unit square over [0, 10]; ids 0..7, some labeled.
inline sepp::MarkedDataset hand_dataset(int K = 2) {
  std::vector<sepp::EventRecord> e{
      ev(0, 0.5, 0.20, 0.30, 0),        ev(1, 1.1, 0.22, 0.31),
      ev(2, 1.9, 0.70, 0.75, K > 1 ? 1 : 0), ev(3, 2.4, 0.25, 0.28),
      ev(4, 3.7, 0.68, 0.80),           ev(5, 4.2, 0.71, 0.74, K > 1 ? 1 : 0),
      ev(6, 6.0, 0.40, 0.50, 0),        ev(7, 8.3, 0.69, 0.77)};
  return sepp::MarkedDataset(std::move(e), sepp::Window{0, 10, 0, 1, 0, 1}, K);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("sepp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support
