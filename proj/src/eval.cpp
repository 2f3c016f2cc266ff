#include "sepp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "csv.hpp"
#include "detail.hpp"
#include "sepp/error.hpp"
#include "sepp/fuse.hpp"
#include "sepp/parallel.hpp"

namespace sepp {

Subset parse_subset(const std::string& s) {
  if (s == "A" || s == "a") return Subset::A;
  if (s == "B" || s == "b") return Subset::B;
  if (s == "all") return Subset::all;
  throw Error("unknown subset '" + s + "' (expected A, B or all)");
}

std::string to_string(Subset s) {
  switch (s) {
    case Subset::A: return "A";
    case Subset::B: return "B";
    case Subset::all: return "all";
  }
  return "all";
}

namespace {

bool in_subset(const EventRecord& e, Subset s) {
  if (s == Subset::all) return true;
  return (s == Subset::A) == (e.source == Source::A);
}

double lambda_floor(const MarkedDataset& history, const Window& w, double scale) {
  const double n = std::max<double>(1.0, static_cast<double>(history.size()));
  return scale * n / w.volume();
}

// First history index with t >= t_query.
std::size_t upper_index(const MarkedDataset& history, double t) {
  const auto ev = history.events();
  const auto it = std::lower_bound(ev.begin(), ev.end(), t,
                                   [](const EventRecord& e, double v) { return e.t < v; });
  return static_cast<std::size_t>(it - ev.begin());
}

}  // namespace

IntensityField::IntensityField(const FittedModel& model, const MarkedDataset& history,
                               const EvalOptions& options)
    : model_(model), history_(history), options_(options) {
  const int K = model.K();
  if (K < 1) throw Error("model has no groups");
  const auto Ku = static_cast<std::size_t>(K);
  std::unordered_map<std::int64_t, const MarkAssignment*> resp;
  for (const auto& a : model.assignments) resp.emplace(a.id, &a);
  parent_weights_.assign(history.size() * Ku, 0.0);
  for (std::size_t j = 0; j < history.size(); ++j) {
    const auto& e = history[j];
    double* row = parent_weights_.data() + j * Ku;
    if (K == 1) {
      row[0] = 1.0;
      continue;
    }
    if (e.mark) {
      if (*e.mark < 0 || *e.mark >= K)
        throw Error("event " + std::to_string(e.id) + " has group outside the model");
      row[*e.mark] = 1.0;
      continue;
    }
    const auto it = resp.find(e.id);
    if (it == resp.end() || it->second->resp.size() != Ku)
      throw Error("event " + std::to_string(e.id) + " has no mark and no responsibilities");
    std::copy(it->second->resp.begin(), it->second->resp.end(), row);
  }
}

double IntensityField::background(int k, double x, double y, double t,
                                  std::optional<std::int64_t> exclude_id) const {
  return detail::background_intensity(model_.groups.at(static_cast<std::size_t>(k)),
                                      model_.window, x, y, t, exclude_id);
}

double IntensityField::triggering(int k, double x, double y, double t) const {
  const detail::TriggerEval g(model_.groups.at(static_cast<std::size_t>(k)).trigger,
                              options_.truncation);
  if (!g.active()) return 0.0;
  double sum = 0.0;
  for (std::size_t j = upper_index(history_, t); j-- > 0;) {
    const auto& e = history_[j];
    const double dt = t - e.t;
    if (dt > g.max_dt) break;
    const double w = parent_weight(j, k);
    if (w == 0.0) continue;
    const double dx = x - e.x, dy = y - e.y;
    const double r2 = dx * dx + dy * dy;
    if (r2 > g.max_r2) continue;
    sum += w * g(r2, dt);
  }
  return sum;
}

double observed_loglik(const MarkedDataset& data, const FittedModel& model, const Window& window,
                       Subset subset, const EvalOptions& options) {
  window.validate();
  const double share = subset == Subset::A   ? model.share_a
                       : subset == Subset::B ? model.share_b
                                             : 1.0;
  if (!(share > 0.0)) throw Error("model was not trained on source " + to_string(subset));
  const IntensityField field(model, data, options);
  const int K = model.K();
  const double floor = lambda_floor(data, window, options.lambda_floor_scale);
  const double log_share = std::log(share);

  std::vector<std::size_t> scored;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (in_subset(data[i], subset) && window.contains(data[i])) scored.push_back(i);

  std::vector<double> terms(scored.size());
  parallel_for(scored.size(), [&](std::size_t s) {
    const auto& e = data[scored[s]];
    double lambda = 0.0;
    // Labeled events carry their mark; in the pooled "all" score every
    // event is charged the total intensity.
    if (subset == Subset::B && K > 1) {
      if (!e.mark || *e.mark >= K)
        throw Error("event " + std::to_string(e.id) + " has group outside the model");
      lambda = field.group_intensity(*e.mark, e.x, e.y, e.t, e.id);
    } else {
      for (int k = 0; k < K; ++k) lambda += field.group_intensity(k, e.x, e.y, e.t, e.id);
    }
    terms[s] = log_share + std::log(std::max(lambda, floor));
  });
  double ll = 0.0;
  for (double v : terms) ll += v;

  double integral = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& g = model.groups[static_cast<std::size_t>(k)];
    integral += detail::background_mass(g, window);
    if (g.trigger.K0 == 0.0) continue;
    double tail = 0.0;
    for (std::size_t j = 0; j < data.size(); ++j) {
      const auto& e = data[j];
      if (e.t >= window.t1) break;
      const double w = field.parent_weight(j, k);
      if (w == 0.0) continue;
      const double lead = std::max(0.0, window.t0 - e.t);
      const double span = window.t1 - std::max(window.t0, e.t);
      tail += w * std::exp(-g.trigger.omega * lead) * -std::expm1(-g.trigger.omega * span);
    }
    integral += g.trigger.K0 * tail;
  }
  return ll - share * integral;
}

double aic(double loglik, int df) {
  if (df < 1) throw Error("aic: df must be >= 1");
  return 2.0 * df - 2.0 * loglik;
}

int model_df(const FittedModel& model) { return 4 * model.K(); }

namespace {

// Day-independent parts of the grid: cell centers and each group's spatial
// background density at them.
struct GridCache {
  int G = 0;
  Window w;
  double dx = 0.0, dy = 0.0;
  std::vector<std::vector<double>> u;  // per group, cy * G + cx

  GridCache(const FittedModel& model, int G_) : G(G_), w(model.window) {
    if (G < 1) throw Error("grid size must be >= 1");
    dx = (w.x1 - w.x0) / G;
    dy = (w.y1 - w.y0) / G;
    const auto cells = static_cast<std::size_t>(G) * static_cast<std::size_t>(G);
    for (const auto& g : model.groups) {
      std::vector<double> col(cells, 0.0);
      if (g.mu0 > 0.0) {
        if (g.uniform_background) {
          std::fill(col.begin(), col.end(), 1.0 / w.area());
        } else if (g.background.Nb() > 0.0) {
          parallel_for(cells, [&](std::size_t c) {
            col[c] = kde_space(cx_center(static_cast<int>(c % static_cast<std::size_t>(G))),
                               cy_center(static_cast<int>(c / static_cast<std::size_t>(G))),
                               g.background);
          });
        }
      }
      u.push_back(std::move(col));
    }
  }

  double cx_center(int cx) const { return w.x0 + (cx + 0.5) * dx; }
  double cy_center(int cy) const { return w.y0 + (cy + 0.5) * dy; }

  std::optional<std::size_t> cell_of(double x, double y) const {
    if (x < w.x0 || x > w.x1 || y < w.y0 || y > w.y1) return std::nullopt;
    const int cx = std::min(G - 1, static_cast<int>((x - w.x0) / dx));
    const int cy = std::min(G - 1, static_cast<int>((y - w.y0) / dy));
    return static_cast<std::size_t>(cy) * static_cast<std::size_t>(G) +
           static_cast<std::size_t>(cx);
  }
};

// Temporal factor of group k's background for a forecast of day d.
double background_time_factor(const GroupParams& g, const Window& w, double d, CellScoring s) {
  if (g.mu0 == 0.0) return 0.0;
  if (g.uniform_background) {
    if (s == CellScoring::center) return (d >= w.t0 && d <= w.t1) ? 1.0 / w.duration() : 0.0;
    const double overlap = std::max(0.0, std::min(d + 1.0, w.t1) - std::max(d, w.t0));
    return overlap / w.duration();
  }
  if (!(g.background.Nb() > 0.0)) return 0.0;
  return s == CellScoring::center ? kde_time(d, g.background)
                                  : kde_time_mass(d, d + 1.0, g.background);
}

GridForecast forecast_day(const IntensityField& field, const GridCache& cache, int day,
                          const GridOptions& options, const Truncation& truncation) {
  const auto& model = field.model();
  const auto& history = field.history();
  const int G = cache.G;
  const auto cells = static_cast<std::size_t>(G) * static_cast<std::size_t>(G);
  const double d = day;

  GridForecast f;
  f.day = day;
  f.G = G;
  f.scores.assign(cells, 0.0);
  f.labels.assign(cells, 0);

  for (int k = 0; k < model.K(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto& g = model.groups[ku];
    const double vt = background_time_factor(g, model.window, d, options.scoring);
    if (vt > 0.0)
      for (std::size_t c = 0; c < cells; ++c) f.scores[c] += g.mu0 * cache.u[ku][c] * vt;
  }

  const std::size_t before = upper_index(history, d);
  for (int k = 0; k < model.K(); ++k) {
    const detail::TriggerEval g(model.groups[static_cast<std::size_t>(k)].trigger, truncation);
    if (!g.active()) continue;
    const double day_factor =
        options.scoring == CellScoring::center ? 1.0 : -std::expm1(-g.omega) / g.omega;
    const bool bounded = std::isfinite(g.max_r2);
    const double reach = bounded ? std::sqrt(g.max_r2) : 0.0;
    for (std::size_t j = before; j-- > 0;) {
      const auto& e = history[j];
      const double dt = d - e.t;
      if (dt > g.max_dt) break;
      const double w = field.parent_weight(j, k) * day_factor;
      if (w == 0.0) continue;
      int cx0 = 0, cx1 = G - 1, cy0 = 0, cy1 = G - 1;
      if (bounded) {
        cx0 = std::max(0, static_cast<int>(std::floor((e.x - reach - cache.w.x0) / cache.dx)));
        cx1 = std::min(G - 1, static_cast<int>(std::floor((e.x + reach - cache.w.x0) / cache.dx)));
        cy0 = std::max(0, static_cast<int>(std::floor((e.y - reach - cache.w.y0) / cache.dy)));
        cy1 = std::min(G - 1, static_cast<int>(std::floor((e.y + reach - cache.w.y0) / cache.dy)));
      }
      for (int cy = cy0; cy <= cy1; ++cy) {
        const double ry = cache.cy_center(cy) - e.y;
        for (int cx = cx0; cx <= cx1; ++cx) {
          const double rx = cache.cx_center(cx) - e.x;
          const double r2 = rx * rx + ry * ry;
          if (r2 > g.max_r2) continue;
          f.scores[static_cast<std::size_t>(cy) * static_cast<std::size_t>(G) +
                   static_cast<std::size_t>(cx)] += w * g(r2, dt);
        }
      }
    }
  }

  for (std::size_t j = before; j < history.size() && history[j].t < d + 1.0; ++j) {
    const auto& e = history[j];
    if (!in_subset(e, options.label_subset)) continue;
    if (const auto c = cache.cell_of(e.x, e.y)) f.labels[*c] = 1;
  }
  return f;
}

}  // namespace

GridForecast grid_forecast(const IntensityField& field, int day, const GridOptions& options) {
  const GridCache cache(field.model(), options.G);
  return forecast_day(field, cache, day, options, field.options().truncation);
}

GridForecast grid_forecast(const FittedModel& model, const MarkedDataset& history, int day,
                           const GridOptions& options, const EvalOptions& eval_options) {
  const IntensityField field(model, history, eval_options);
  const GridCache cache(model, options.G);
  return forecast_day(field, cache, day, options, eval_options.truncation);
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw Error("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j share their mean.
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t m = i; m < j; ++m)
      if (labels[order[m]]) {
        rank_sum += midrank;
        ++positives;
      }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw Error("degenerate labels");
  const double P = static_cast<double>(positives);
  const double U = rank_sum - P * (P + 1.0) / 2.0;
  return U / (P * static_cast<double>(negatives));
}

ForecastSummary forecast_auc(const FittedModel& model, const MarkedDataset& history,
                             const GridOptions& options, const EvalOptions& eval_options,
                             const std::function<void(const GridForecast&)>& sink) {
  const Window& w = model.window;
  const int first = options.first_day.value_or(static_cast<int>(std::ceil(w.t0)));
  const int last = options.last_day.value_or(static_cast<int>(std::floor(w.t1)) - 1);
  if (last < first) throw Error("forecast range is empty");
  const IntensityField field(model, history, eval_options);
  const GridCache cache(model, options.G);

  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  ForecastSummary out;
  for (int day = first; day <= last; ++day) {
    const GridForecast f = forecast_day(field, cache, day, options, eval_options.truncation);
    scores.insert(scores.end(), f.scores.begin(), f.scores.end());
    labels.insert(labels.end(), f.labels.begin(), f.labels.end());
    if (sink) sink(f);
    ++out.days;
  }
  out.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  out.auc = auc(scores, labels);
  return out;
}

std::vector<BranchingRatio> branching_ratio(const FittedModel& model) {
  std::vector<BranchingRatio> out;
  for (const auto& g : model.groups) out.push_back({g.trigger.K0, g.trigger.K0 < 1.0});
  return out;
}

std::vector<ScoreRow> compare_models(const MarkedDataset& data, std::span<const NamedModel> models,
                                     const CompareOptions& options) {
  std::vector<ScoreRow> rows;
  for (const auto& nm : models) {
    if (!nm.model) throw Error("compare_models: null model '" + nm.name + "'");
    const MarkedDataset history = nm.history_source ? data.only(*nm.history_source) : data;
    for (Subset s : options.subsets) {
      if (nm.history_source && s != (*nm.history_source == Source::A ? Subset::A : Subset::B))
        continue;
      // Sources the model never saw, or that have no events here, are skipped.
      const double share = s == Subset::A   ? nm.model->share_a
                           : s == Subset::B ? nm.model->share_b
                                            : 1.0;
      const auto present = std::any_of(data.events().begin(), data.events().end(),
                                       [&](const EventRecord& e) { return in_subset(e, s); });
      if (!(share > 0.0) || !present) continue;
      ScoreRow row;
      row.model = nm.name;
      row.subset = s;
      row.loglik = observed_loglik(history, *nm.model, data.window(), s, options.eval);
      row.df = model_df(*nm.model);
      row.aic = aic(row.loglik, row.df);
      if (options.with_auc) {
        GridOptions grid = options.grid;
        grid.label_subset = s;
        row.auc = forecast_auc(*nm.model, history, grid, options.eval).auc;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

Baselines fit_baselines(const MarkedDataset& data, int K, const FitConfig& config) {
  const MarkedDataset a = data.only(Source::A);
  const MarkedDataset b = data.only(Source::B);
  if (a.size() < 2) throw Error("A-only baseline needs at least 2 unlabeled events");
  if (b.size() < 2) throw Error("B-only baseline needs at least 2 labeled events");
  return {fit(a, config), fit_fused(b, K, config)};
}

void write_score_report(std::ostream& out, std::span<const ScoreRow> rows) {
  out << "model,subset,loglik,df,aic,auc\n";
  for (const auto& r : rows) {
    out << r.model << ',' << to_string(r.subset) << ',' << csv::format_double(r.loglik) << ','
        << r.df << ',' << csv::format_double(r.aic) << ',';
    if (r.auc) out << csv::format_double(*r.auc);
    out << '\n';
  }
}

void write_forecast_header(std::ostream& out) { out << "day,cell_x,cell_y,score,label\n"; }

void write_forecast_rows(std::ostream& out, const GridForecast& f) {
  for (int cy = 0; cy < f.G; ++cy)
    for (int cx = 0; cx < f.G; ++cx) {
      const auto c = static_cast<std::size_t>(cy) * static_cast<std::size_t>(f.G) +
                     static_cast<std::size_t>(cx);
      out << f.day << ',' << cx << ',' << cy << ',' << csv::format_double(f.scores[c]) << ','
          << int(f.labels[c]) << '\n';
    }
}

}  // namespace sepp
