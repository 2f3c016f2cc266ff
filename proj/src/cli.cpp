#include "sepp/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "json.hpp"
#include "sepp/error.hpp"
#include "sepp/fuse.hpp"
#include "sepp/model.hpp"
#include "sepp/nmf.hpp"
#include "sepp/parallel.hpp"
#include "sepp/tox.hpp"

namespace sepp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string>& general_keys() {
  static const std::set<std::string> keys{"seed", "threads", "k", "grid", "subset",
                                          "replicates", "horizon"};
  return keys;
}

const std::set<std::string>& sim_keys() {
  static const std::set<std::string> keys{"T", "unlabeled_fraction", "max_events", "groups"};
  return keys;
}

const std::set<std::string>& fit_keys() {
  static const std::set<std::string> keys{
      "max_iters",  "tol",           "lambda_floor_scale", "sigma_floor_scale",
      "bandwidth",  "bandwidth_k",   "freeze_bandwidths",  "truncation",
      "prior_omega", "prior_sigma"};
  return keys;
}

bool is_group_key(const std::string& key) { return key.rfind("group.", 0) == 0; }

void check_keys(const ConfigMap& cfg) {
  for (const auto& [key, value] : cfg) {
    if (general_keys().count(key) || sim_keys().count(key) || fit_keys().count(key) ||
        is_group_key(key))
      continue;
    throw Error("config: unknown field '" + key + "'");
  }
}

double get_double(const ConfigMap& cfg, const std::string& key, double fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  double v = 0.0;
  if (!csv::parse_double(it->second, v) || !std::isfinite(v))
    throw Error("config: field '" + key + "' is not a number: '" + it->second + "'");
  return v;
}

long long get_int(const ConfigMap& cfg, const std::string& key, long long fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  long long v = 0;
  if (!csv::parse_int(it->second, v))
    throw Error("config: field '" + key + "' is not an integer: '" + it->second + "'");
  return v;
}

bool get_bool(const ConfigMap& cfg, const std::string& key, bool fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  const auto& s = it->second;
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw Error("config: field '" + key + "' is not a boolean: '" + s + "'");
}

std::string stamp(int r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", r);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

class Manifest {
 public:
  Manifest(std::string command, const Common& common) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["seed"] = common.seed;
    doc_["threads"] = common.threads;
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
    doc_["warnings"] = 0;
    if (common.config) {
      doc_["config_file"] = common.config->string();
      const auto cfg = load_config(*common.config);
      doc_["config"] = json(cfg);
    }
    fs::create_directories(common.out);
    dir_ = common.out;
  }

  json& operator[](const std::string& key) { return doc_[key]; }
  void input(const fs::path& p) { doc_["inputs"].push_back(p.string()); }
  void output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }
  void warn(std::size_t n) { doc_["warnings"] = doc_["warnings"].get<std::size_t>() + n; }

  void write() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    doc_["elapsed_seconds"] = secs;
    auto out = open_out(dir_ / "manifest.json");
    out << doc_.dump(1) << '\n';
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
  fs::path dir_;
};

ConfigMap config_of(const Common& c) { return c.config ? load_config(*c.config) : ConfigMap{}; }

json params_json(const FittedModel& m) {
  json groups = json::array();
  for (const auto& g : m.groups)
    groups.push_back({{"K0", g.trigger.K0},
                      {"omega", g.trigger.omega},
                      {"sigma", g.trigger.sigma},
                      {"mu0", g.mu0},
                      {"empty", g.empty}});
  return groups;
}

MarkedDataset load_for_model(const fs::path& events, const std::optional<fs::path>& labels_path,
                             const FittedModel& model) {
  LabelMap labels;
  if (labels_path) labels = load_labels(*labels_path);
  return load_events(events, model.window, model.K(), labels_path ? &labels : nullptr);
}

// Group of every event for reporting: labeled events by mark, unlabeled by
// their most probable group.
std::vector<int> event_groups(const MarkedDataset& data, const FittedModel& model) {
  std::unordered_map<std::int64_t, int> inferred;
  for (const auto& a : model.assignments) inferred.emplace(a.id, a.group);
  std::vector<int> out;
  for (const auto& e : data.events()) {
    if (model.K() == 1) {
      out.push_back(0);
    } else if (e.mark) {
      out.push_back(*e.mark);
    } else {
      const auto it = inferred.find(e.id);
      if (it == inferred.end())
        throw Error("event " + std::to_string(e.id) + " has no mark and no responsibilities");
      out.push_back(it->second);
    }
  }
  return out;
}

}  // namespace

ConfigMap parse_config(const std::string& text) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = csv::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw Error("config line " + std::to_string(n) + ": expected key = value");
    const std::string key(csv::trim(body.substr(0, eq)));
    const std::string value(csv::trim(body.substr(eq + 1)));
    if (key.empty()) throw Error("config line " + std::to_string(n) + ": empty key");
    if (!cfg.emplace(key, value).second)
      throw Error("config line " + std::to_string(n) + ": duplicate field '" + key + "'");
  }
  check_keys(cfg);
  return cfg;
}

ConfigMap load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

SimConfig sim_config_from(const ConfigMap& cfg) {
  check_keys(cfg);
  SimConfig c = reference_config();
  c.T = get_double(cfg, "T", c.T);
  c.unlabeled_fraction = get_double(cfg, "unlabeled_fraction", c.unlabeled_fraction);
  const auto max_events = get_int(cfg, "max_events", static_cast<long long>(c.max_events));
  if (max_events < 1) throw Error("config: field 'max_events' must be >= 1");
  c.max_events = static_cast<std::size_t>(max_events);
  const auto groups = get_int(cfg, "groups", static_cast<long long>(c.groups.size()));
  if (groups < 1) throw Error("config: field 'groups' must be >= 1");
  c.groups.resize(static_cast<std::size_t>(groups));

  for (const auto& [key, value] : cfg) {
    if (!is_group_key(key)) continue;
    const auto dot = key.find('.', 6);
    long long g = -1;
    if (dot == std::string::npos || !csv::parse_int(std::string_view(key).substr(6, dot - 6), g) ||
        g < 0 || g >= groups)
      throw Error("config: field '" + key + "' does not name a group 0.." +
                  std::to_string(groups - 1));
    auto& spec = c.groups[static_cast<std::size_t>(g)];
    const std::string field = key.substr(dot + 1);
    if (field == "bg") {
      const auto parts = csv::split(value);
      if (parts.size() != 4) throw Error("config: field '" + key + "' needs 4 probabilities");
      for (std::size_t q = 0; q < 4; ++q)
        if (!csv::parse_double(parts[q], spec.bg[q]))
          throw Error("config: field '" + key + "' is not a list of numbers");
    } else if (field == "mu") {
      spec.mu = get_double(cfg, key, 0.0);
    } else if (field == "K0") {
      spec.trigger.K0 = get_double(cfg, key, 0.0);
    } else if (field == "omega") {
      spec.trigger.omega = get_double(cfg, key, 0.0);
    } else if (field == "sigma") {
      spec.trigger.sigma = get_double(cfg, key, 0.0);
    } else {
      throw Error("config: unknown field '" + key + "'");
    }
  }
  for (std::size_t g = 0; g < c.groups.size(); ++g) {
    c.groups[g].label = static_cast<int>(g);
    try {
      c.groups[g].validate();
    } catch (const Error& e) {
      throw Error("config: group." + std::to_string(g) + ": " + e.what());
    }
  }
  if (!(c.T > 0.0)) throw Error("config: field 'T' must be positive");
  if (!(c.unlabeled_fraction >= 0.0 && c.unlabeled_fraction <= 1.0))
    throw Error("config: field 'unlabeled_fraction' must lie in [0, 1]");
  return c;
}

FitConfig fit_config_from(const ConfigMap& cfg) {
  check_keys(cfg);
  FitConfig c;
  c.max_iters = static_cast<int>(get_int(cfg, "max_iters", c.max_iters));
  if (c.max_iters < 1) throw Error("config: field 'max_iters' must be >= 1");
  c.tol = get_double(cfg, "tol", c.tol);
  if (!(c.tol > 0.0)) throw Error("config: field 'tol' must be positive");
  c.lambda_floor_scale = get_double(cfg, "lambda_floor_scale", c.lambda_floor_scale);
  c.sigma_floor_scale = get_double(cfg, "sigma_floor_scale", c.sigma_floor_scale);
  if (const auto it = cfg.find("bandwidth"); it != cfg.end()) {
    if (it->second == "knn")
      c.bandwidth.strategy = BandwidthStrategy::nearest_neighbor;
    else if (it->second == "cv")
      c.bandwidth.strategy = BandwidthStrategy::cross_validation;
    else
      throw Error("config: field 'bandwidth' must be knn or cv");
  }
  c.bandwidth.k = static_cast<int>(get_int(cfg, "bandwidth_k", c.bandwidth.k));
  if (c.bandwidth.k < 1) throw Error("config: field 'bandwidth_k' must be >= 1");
  c.freeze_bandwidths = get_bool(cfg, "freeze_bandwidths", c.freeze_bandwidths);
  c.truncation.enabled = get_bool(cfg, "truncation", c.truncation.enabled);
  if (cfg.count("prior_omega")) c.prior_omega = get_double(cfg, "prior_omega", 1.0);
  if (cfg.count("prior_sigma")) c.prior_sigma = get_double(cfg, "prior_sigma", 1.0);
  return c;
}

int cmd_simulate(const SimulateArgs& args) {
  if (args.replicates < 1) throw Error("--replicates must be >= 1");
  set_thread_count(args.common.threads);
  SimConfig config = sim_config_from(config_of(args.common));
  if (args.unlabeled_fraction) config.unlabeled_fraction = *args.unlabeled_fraction;
  config.validate();

  Manifest manifest("simulate", args.common);
  json groups = json::array();
  for (const auto& g : config.groups)
    groups.push_back({{"bg", g.bg},
                      {"mu", g.mu},
                      {"K0", g.trigger.K0},
                      {"omega", g.trigger.omega},
                      {"sigma", g.trigger.sigma}});
  manifest["effective"] = {{"T", config.T},
                           {"unlabeled_fraction", config.unlabeled_fraction},
                           {"max_events", config.max_events},
                           {"groups", groups},
                           {"replicates", args.replicates}};
  json counts = json::array();
  for (int r = 0; r < args.replicates; ++r) {
    SimConfig rc = config;
    rc.seed = derive_seed(args.common.seed, static_cast<std::uint64_t>(r));
    const SimulatedData sim = simulate_dataset(rc);
    const fs::path events = args.common.out / ("events_" + stamp(r) + ".csv");
    const fs::path truth = args.common.out / ("truth_" + stamp(r) + ".csv");
    save_events(events, sim.dataset.events(), true);
    save_truth(truth, sim.truth);
    manifest.output(events);
    manifest.output(truth);
    counts.push_back({{"replicate", r},
                      {"seed", rc.seed},
                      {"events", sim.dataset.size()},
                      {"unlabeled", sim.dataset.count(Source::A)},
                      {"true_counts", sim.true_counts}});
  }
  manifest["replicates"] = counts;
  manifest.write();
  return 0;
}

int cmd_cluster(const ClusterArgs& args) {
  set_thread_count(args.common.threads);
  const ToxMatrix tox = load_tox(args.tox);
  NmfOptions options;
  options.iters = args.iters;
  options.restarts = args.restarts;
  const auto max_k = static_cast<int>(std::min(tox.V.rows(), tox.V.cols()));

  Manifest manifest("cluster", args.common);
  manifest.input(args.tox);
  manifest["reports"] = tox.report_ids.size();
  manifest["dropped_empty_reports"] = tox.dropped_empty;
  manifest.warn(tox.dropped_empty);

  int K = 0;
  SelectKResult selection;
  if (args.k) {
    K = *args.k;
  } else {
    if (args.k_min < 1 || args.k_max < args.k_min) throw Error("invalid K range");
    std::vector<int> ks;
    for (int k = args.k_min; k <= std::min(args.k_max, max_k); ++k) ks.push_back(k);
    if (ks.empty()) throw Error("K range exceeds the matrix rank bound " + std::to_string(max_k));
    selection = select_k(tox, ks, args.common.seed, options, args.top);
    K = selection.best_k;
  }
  const NmfFactors F = factorize(tox.V, K, args.common.seed, options);
  const ClusterLabels labels = assign_clusters(F);
  const CoherenceScore score = coherence(F, tox, std::min<int>(args.top, static_cast<int>(tox.V.rows())));
  const auto terms = top_terms(F, tox.substances, std::min<int>(args.top, static_cast<int>(tox.V.rows())));

  const fs::path labels_path = args.common.out / "labels.csv";
  {
    auto out = open_out(labels_path);
    out << "id,group\n";
    for (std::size_t n = 0; n < labels.labels.size(); ++n)
      out << tox.report_ids[n] << ',' << labels.labels[n] << '\n';
  }
  const fs::path coherence_path = args.common.out / "coherence.csv";
  {
    auto out = open_out(coherence_path);
    out << "k,mean_coherence\n";
    for (std::size_t i = 0; i < selection.ks.size(); ++i)
      out << selection.ks[i] << ',' << csv::format_double(selection.mean_coherence[i]) << '\n';
  }
  const fs::path topics_path = args.common.out / "topics.json";
  {
    json topics = json::array();
    for (int k = 0; k < K; ++k)
      topics.push_back({{"group", k},
                        {"terms", terms[static_cast<std::size_t>(k)]},
                        {"coherence", score.per_topic[static_cast<std::size_t>(k)]}});
    json doc{{"K", K},
             {"selected", !args.k.has_value()},
             {"mean_coherence", score.mean},
             {"objective", F.trace.back()},
             {"topics", topics}};
    auto out = open_out(topics_path);
    out << doc.dump(1) << '\n';
  }
  manifest["K"] = K;
  manifest["zero_columns"] = labels.zero_columns;
  manifest.warn(labels.zero_columns + static_cast<std::size_t>(score.skipped_pairs));
  manifest.output(labels_path);
  manifest.output(coherence_path);
  manifest.output(topics_path);
  manifest.write();
  return 0;
}

int cmd_fit(const FitArgs& args) {
  if (args.k < 1) throw Error("--k must be >= 1");
  set_thread_count(args.common.threads);
  FitConfig config = fit_config_from(config_of(args.common));
  config.seed = args.common.seed;

  LabelMap labels;
  if (args.labels) labels = load_labels(*args.labels);
  const LabelMap* lp = args.labels ? &labels : nullptr;
  const auto rows = read_event_rows(args.events, lp);
  if (rows.empty()) throw Error("no events in " + args.events.string());
  const Window window = bounding_window(rows, args.horizon);
  const MarkedDataset data = load_events(args.events, window, args.k, lp);

  Manifest manifest("fit", args.common);
  manifest.input(args.events);
  if (args.labels) manifest.input(*args.labels);

  const bool single = args.k == 1 && data.count(Source::B) == 0;
  const FittedModel model = single ? fit(data, config) : fit_fused(data, args.k, config);

  const fs::path model_path = args.common.out / "model.json";
  save_model(model, model_path);
  const fs::path assign_path = args.common.out / "assignments.csv";
  {
    auto out = open_out(assign_path);
    out << "id,group,prob\n";
    for (const auto& a : model.assignments)
      out << a.id << ',' << a.group << ',' << csv::format_double(a.prob) << '\n';
  }
  manifest["method"] = single ? "single" : "fused";
  manifest["K"] = args.k;
  manifest["events"] = data.size();
  manifest["unlabeled"] = data.count(Source::A);
  manifest["iterations"] = model.trace.iterations;
  manifest["converged"] = model.trace.converged;
  manifest["params"] = params_json(model);
  manifest.warn(model.warnings + (model.trace.converged ? 0 : 1));
  manifest.output(model_path);
  manifest.output(assign_path);
  manifest.write();
  return 0;
}

int cmd_evaluate(const EvaluateArgs& args) {
  set_thread_count(args.common.threads);
  const FittedModel model = load_model(args.model);
  const MarkedDataset data = load_for_model(args.events, args.labels, model);

  Manifest manifest("evaluate", args.common);
  manifest.input(args.model);
  manifest.input(args.events);

  CompareOptions options;
  if (args.subset == Subset::all)
    options.subsets = {Subset::A, Subset::B, Subset::all};
  else
    options.subsets = {args.subset};
  options.with_auc = args.auc;
  options.grid.G = args.grid;
  options.grid.scoring = args.day_integrated ? CellScoring::day_integrated : CellScoring::center;

  std::vector<NamedModel> models{{model.fused ? "fused" : "single", &model, std::nullopt}};
  Baselines baselines;
  if (args.baselines) {
    FitConfig config = fit_config_from(config_of(args.common));
    config.seed = args.common.seed;
    baselines = fit_baselines(data, model.K(), config);
    models.push_back({"A-only", &baselines.a_only, Source::A});
    models.push_back({"B-only", &baselines.b_only, Source::B});
  }
  const auto rows = compare_models(data, models, options);
  const fs::path scores_path = args.common.out / "scores.csv";
  {
    auto out = open_out(scores_path);
    write_score_report(out, rows);
  }
  manifest.output(scores_path);

  if (args.dump_forecasts) {
    const fs::path forecast_path = args.common.out / "forecast.csv";
    auto out = open_out(forecast_path);
    write_forecast_header(out);
    GridOptions grid = options.grid;
    grid.label_subset = args.subset;
    const auto summary = forecast_auc(model, data, grid, options.eval,
                                      [&](const GridForecast& f) { write_forecast_rows(out, f); });
    manifest["forecast_auc"] = summary.auc;
    manifest.output(forecast_path);
  }
  manifest["grid"] = args.grid;
  manifest["subset"] = to_string(args.subset);
  manifest.warn(model.warnings);
  manifest.write();
  return 0;
}

int cmd_report(const ReportArgs& args) {
  if (args.grid < 1) throw Error("--grid must be >= 1");
  if (args.bins < 1) throw Error("--bins must be >= 1");
  set_thread_count(args.common.threads);
  const FittedModel model = load_model(args.model);
  const MarkedDataset data = load_for_model(args.events, args.labels, model);
  const Window& w = model.window;

  Manifest manifest("report", args.common);
  manifest.input(args.model);
  manifest.input(args.events);

  const fs::path heat_path = args.common.out / "heatmap.csv";
  {
    auto out = open_out(heat_path);
    out << "group,cell_x,cell_y,density\n";
    const double dx = (w.x1 - w.x0) / args.grid, dy = (w.y1 - w.y0) / args.grid;
    for (int k = 0; k < model.K(); ++k) {
      const auto& g = model.groups[static_cast<std::size_t>(k)];
      for (int cy = 0; cy < args.grid; ++cy)
        for (int cx = 0; cx < args.grid; ++cx) {
          double density = 0.0;
          if (g.uniform_background)
            density = 1.0 / w.area();
          else if (g.background.Nb() > 0.0)
            density = kde_space(w.x0 + (cx + 0.5) * dx, w.y0 + (cy + 0.5) * dy, g.background);
          out << k << ',' << cx << ',' << cy << ',' << csv::format_double(density) << '\n';
        }
    }
  }

  const fs::path hist_path = args.common.out / "time_hist.csv";
  {
    const auto groups = event_groups(data, model);
    const auto K = static_cast<std::size_t>(model.K());
    const auto bins = static_cast<std::size_t>(args.bins);
    // counts[(k * 2 + source) * bins + b]
    std::vector<std::size_t> counts(K * 2 * bins, 0);
    const double width = w.duration() / args.bins;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& e = data[i];
      const auto b = std::min(bins - 1, static_cast<std::size_t>((e.t - w.t0) / width));
      const std::size_t s = e.source == Source::A ? 0 : 1;
      ++counts[(static_cast<std::size_t>(groups[i]) * 2 + s) * bins + b];
    }
    auto out = open_out(hist_path);
    out << "group,source,bin,t_lo,t_hi,count\n";
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t b = 0; b < bins; ++b)
          out << k << ',' << (s == 0 ? 'A' : 'B') << ',' << b << ','
              << csv::format_double(w.t0 + static_cast<double>(b) * width) << ','
              << csv::format_double(w.t0 + static_cast<double>(b + 1) * width) << ','
              << counts[(k * 2 + s) * bins + b] << '\n';
  }

  const fs::path gap_path = args.common.out / "inter_event.csv";
  const fs::path gap_fit_path = args.common.out / "inter_event_fit.json";
  {
    std::vector<double> gaps;
    for (std::size_t i = 1; i < data.size(); ++i) gaps.push_back(data[i].t - data[i - 1].t);
    auto out = open_out(gap_path);
    out << "bin,lo,hi,count\n";
    json fit_doc{{"n", gaps.size()}};
    if (!gaps.empty()) {
      const double max_gap = *std::max_element(gaps.begin(), gaps.end());
      const double width = max_gap > 0.0 ? max_gap / args.bins : 1.0;
      std::vector<std::size_t> counts(static_cast<std::size_t>(args.bins), 0);
      double total = 0.0;
      for (double g : gaps) {
        total += g;
        const auto b = std::min(counts.size() - 1, static_cast<std::size_t>(g / width));
        ++counts[b];
      }
      for (std::size_t b = 0; b < counts.size(); ++b)
        out << b << ',' << csv::format_double(static_cast<double>(b) * width) << ','
            << csv::format_double(static_cast<double>(b + 1) * width) << ',' << counts[b] << '\n';
      const double mean = total / static_cast<double>(gaps.size());
      fit_doc["mean"] = mean;
      fit_doc["rate"] = mean > 0.0 ? 1.0 / mean : 0.0;
      fit_doc["bin_width"] = width;
    }
    auto fout = open_out(gap_fit_path);
    fout << fit_doc.dump(1) << '\n';
  }

  const fs::path branching_path = args.common.out / "branching.csv";
  {
    auto out = open_out(branching_path);
    out << "group,K0,subcritical\n";
    const auto ratios = branching_ratio(model);
    for (std::size_t k = 0; k < ratios.size(); ++k)
      out << k << ',' << csv::format_double(ratios[k].K0) << ',' << int(ratios[k].subcritical)
          << '\n';
  }

  for (const auto& p : {heat_path, hist_path, gap_path, gap_fit_path, branching_path})
    manifest.output(p);
  manifest["grid"] = args.grid;
  manifest["bins"] = args.bins;
  manifest.write();
  return 0;
}

}  // namespace sepp::cli
