#include "sepp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "sepp/error.hpp"

namespace sepp {

void GroupSimSpec::validate() const {
  double s = 0.0;
  for (double p : bg) {
    if (!(p >= 0.0)) throw Error("background quadrant probabilities must be >= 0");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-12) throw Error("background quadrant probabilities must sum to 1");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw Error("mu must be finite and >= 0");
  trigger.validate();
}

void SimConfig::validate() const {
  if (groups.empty()) throw Error("simulation needs at least one group");
  if (!(T > 0.0) || !std::isfinite(T)) throw Error("horizon T must be positive");
  if (!(unlabeled_fraction >= 0.0 && unlabeled_fraction <= 1.0))
    throw Error("unlabeled_fraction must lie in [0, 1]");
  for (const auto& g : groups) g.validate();
}

SimConfig reference_config(double unlabeled_fraction, std::uint64_t seed) {
  SimConfig c;
  c.unlabeled_fraction = unlabeled_fraction;
  c.seed = seed;
  c.T = 1000.0;
  c.groups = {
      {{0.1, 0.2, 0.3, 0.4}, 67.0, {0.9, 0.1, 0.01}, 0},
      {{0.4, 0.3, 0.2, 0.1}, 28.0, {0.8, 0.5, 0.001}, 1},
      {{0.4, 0.4, 0.1, 0.1}, 55.0, {0.6, 1.0, 0.02}, 2},
      {{0.1, 0.4, 0.1, 0.4}, 132.0, {0.75, 0.3, 0.003}, 3},
  };
  return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(seed ^ mix(index + 0x632be59bd9b4e019ULL));
}

std::vector<SimEvent> simulate_background(const GroupSimSpec& spec, double T, Rng& rng) {
  spec.validate();
  std::vector<SimEvent> out;
  if (spec.mu == 0.0) return out;
  const auto n = std::poisson_distribution<long long>(spec.mu)(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::discrete_distribution<int> quadrant(spec.bg.begin(), spec.bg.end());
  out.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) {
    SimEvent e;
    e.group = spec.label;
    e.t = T * unit(rng);
    const int q = quadrant(rng);
    const double left = (q == 0 || q == 2) ? 0.0 : 0.5;
    const double bottom = (q == 0 || q == 1) ? 0.5 : 0.0;
    e.x = left + 0.5 * unit(rng);
    e.y = bottom + 0.5 * unit(rng);
    out.push_back(e);
  }
  return out;
}

std::vector<SimEvent> simulate_background(const GroupSimSpec& spec, double T,
                                          std::uint64_t seed) {
  Rng rng(seed);
  return simulate_background(spec, T, rng);
}

std::vector<SimEvent> simulate_offspring(const SimEvent& parent, std::int64_t parent_index,
                                         std::int64_t base, const TriggerParams& trigger,
                                         double T, Rng& rng, std::size_t max_events) {
  trigger.validate();
  if (parent.t > T) throw Error("simulate_offspring: parent lies beyond the horizon");
  std::vector<SimEvent> out;
  if (trigger.K0 == 0.0) return out;
  std::poisson_distribution<long long> count(trigger.K0);
  std::exponential_distribution<double> delay(trigger.omega);
  std::normal_distribution<double> offset(0.0, trigger.sigma);

  // Breadth-first over generations; position -1 stands for `parent`.
  std::size_t next = 0;
  auto spawn = [&](const SimEvent& from, std::int64_t from_index) {
    const auto n = count(rng);
    for (long long c = 0; c < n; ++c) {
      SimEvent child;
      child.group = parent.group;
      child.t = from.t + delay(rng);
      child.x = from.x + offset(rng);
      child.y = from.y + offset(rng);
      child.parent = from_index;
      if (child.t > T) continue;
      out.push_back(child);
      if (out.size() > max_events) throw Error("supercritical cascade: event cap exceeded");
    }
  };
  spawn(parent, parent_index);
  while (next < out.size()) {
    const SimEvent from = out[next];
    spawn(from, base + static_cast<std::int64_t>(next));
    ++next;
  }
  return out;
}

SimulatedData simulate_dataset(const SimConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::vector<SimEvent> all;
  for (std::size_t g = 0; g < config.groups.size(); ++g) {
    GroupSimSpec spec = config.groups[g];
    spec.label = static_cast<int>(g);
    auto bg = simulate_background(spec, config.T, rng);
    const auto first = static_cast<std::int64_t>(all.size());
    all.insert(all.end(), bg.begin(), bg.end());
    for (std::size_t b = 0; b < bg.size(); ++b) {
      const auto base = static_cast<std::int64_t>(all.size());
      auto kids = simulate_offspring(bg[b], first + static_cast<std::int64_t>(b), base,
                                     spec.trigger, config.T, rng, config.max_events);
      all.insert(all.end(), kids.begin(), kids.end());
      if (all.size() > config.max_events)
        throw Error("supercritical cascade: event cap exceeded");
    }
  }

  std::bernoulli_distribution unlabeled(config.unlabeled_fraction);
  std::vector<bool> is_a(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) is_a[i] = unlabeled(rng);

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return all[a].t < all[b].t; });
  std::vector<std::int64_t> id_of(all.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    id_of[order[pos]] = static_cast<std::int64_t>(pos);

  SimulatedData out;
  std::vector<EventRecord> events;
  events.reserve(all.size());
  out.true_counts.assign(config.groups.size(), 0);
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto& s = all[order[pos]];
    EventRecord e;
    e.id = static_cast<std::int64_t>(pos);
    e.t = s.t;
    e.x = s.x;
    e.y = s.y;
    e.source = is_a[order[pos]] ? Source::A : Source::B;
    if (e.source == Source::B) e.mark = s.group;
    events.push_back(e);
    out.truth.push_back({e.id, s.group, s.parent < 0 ? -1 : id_of[static_cast<std::size_t>(s.parent)]});
    out.true_marks.push_back(s.group);
    ++out.true_counts[static_cast<std::size_t>(s.group)];
    xmin = std::min(xmin, s.x);
    xmax = std::max(xmax, s.x);
    ymin = std::min(ymin, s.y);
    ymax = std::max(ymax, s.y);
  }
  const Window window{0.0, config.T, xmin, xmax, ymin, ymax};
  out.dataset = MarkedDataset(std::move(events), window, static_cast<int>(config.groups.size()));
  return out;
}

void save_truth(const std::filesystem::path& path, const std::vector<TruthRow>& truth) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "id,true_group,parent_id\n";
  for (const auto& r : truth) out << r.id << ',' << r.true_group << ',' << r.parent_id << '\n';
}

}  // namespace sepp
