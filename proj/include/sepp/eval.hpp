#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sepp/data.hpp"
#include "sepp/em.hpp"
#include "sepp/model.hpp"

namespace sepp {

enum class Subset { A, B, all };

Subset parse_subset(const std::string& s);
std::string to_string(Subset s);

struct EvalOptions {
  double lambda_floor_scale = 1e-12;
  Truncation truncation;
};

// Conditional intensity of a fitted model given an event history. Unlabeled
// parents contribute to group k with their stored responsibility r_j(k).
class IntensityField {
 public:
  IntensityField(const FittedModel& model, const MarkedDataset& history,
                 const EvalOptions& options = {});

  int K() const { return model_.K(); }
  // Background mu0 u v of group k; `exclude_id` drops that event's own
  // kernel from the KDE.
  double background(int k, double x, double y, double t,
                    std::optional<std::int64_t> exclude_id = std::nullopt) const;
  // Triggering from history events strictly before t.
  double triggering(int k, double x, double y, double t) const;
  double group_intensity(int k, double x, double y, double t,
                         std::optional<std::int64_t> exclude_id = std::nullopt) const {
    return background(k, x, y, t, exclude_id) + triggering(k, x, y, t);
  }
  double parent_weight(std::size_t j, int k) const {
    return parent_weights_[j * static_cast<std::size_t>(K()) + static_cast<std::size_t>(k)];
  }
  const MarkedDataset& history() const { return history_; }
  const FittedModel& model() const { return model_; }
  const EvalOptions& options() const { return options_; }

 private:
  const FittedModel& model_;
  const MarkedDataset& history_;
  EvalOptions options_;
  std::vector<double> parent_weights_;  // N x K
};

// Observed-data log-likelihood of the events of `subset`: sum of log
// intensities minus the window integral, both scaled by the model's share of
// that source (1 for all).
double observed_loglik(const MarkedDataset& data, const FittedModel& model,
                       const Window& window, Subset subset,
                       const EvalOptions& options = {});

double aic(double loglik, int df);

// Four scalar parameters per group.
int model_df(const FittedModel& model);

enum class CellScoring { center, day_integrated };

struct GridOptions {
  int G = 50;
  Subset label_subset = Subset::all;
  CellScoring scoring = CellScoring::center;
  std::optional<int> first_day;  // default: first whole day after window start
  std::optional<int> last_day;   // default: last whole day inside the window
};

struct GridForecast {
  int day = 0;
  int G = 0;
  std::vector<double> scores;         // cell (cx, cy) at cy * G + cx
  std::vector<std::uint8_t> labels;   // 1 iff an event of the subset falls in the cell that day
};

GridForecast grid_forecast(const IntensityField& field, int day,
                           const GridOptions& options);
GridForecast grid_forecast(const FittedModel& model,
                           const MarkedDataset& history, int day,
                           const GridOptions& options,
                           const EvalOptions& eval_options = {});

// Mann-Whitney AUC with midranks for ties. Throws on single-class labels.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct ForecastSummary {
  double auc = 0.5;
  int days = 0;
  std::size_t positives = 0;
};

// Daily forecasts over the evaluation range pooled into one AUC. `sink`, when
// set, receives every day's forecast.
ForecastSummary forecast_auc(const FittedModel& model,
                             const MarkedDataset& history,
                             const GridOptions& options,
                             const EvalOptions& eval_options = {},
                             const std::function<void(const GridForecast&)>& sink = {});

struct BranchingRatio {
  double K0 = 0.0;
  bool subcritical = true;
};

std::vector<BranchingRatio> branching_ratio(const FittedModel& model);

struct ScoreRow {
  std::string model;
  Subset subset = Subset::all;
  double loglik = 0.0;
  int df = 0;
  double aic = 0.0;
  std::optional<double> auc;
};

struct CompareOptions {
  std::vector<Subset> subsets{Subset::A, Subset::B};
  bool with_auc = false;
  GridOptions grid;
  EvalOptions eval;
};

struct NamedModel {
  std::string name;
  const FittedModel* model = nullptr;
  // Events the model conditions on. Baselines see only their own source.
  std::optional<Source> history_source;
};

// Scores every (model, subset) pair. A model restricted to one source is
// only scored on that source.
std::vector<ScoreRow> compare_models(const MarkedDataset& data,
                                     std::span<const NamedModel> models,
                                     const CompareOptions& options = {});

struct Baselines {
  FittedModel a_only;  // single group on the unlabeled source
  FittedModel b_only;  // K groups on the labeled source
};

Baselines fit_baselines(const MarkedDataset& data, int K,
                        const FitConfig& config = {});

// Report CSV: `model,subset,loglik,df,aic,auc`.
void write_score_report(std::ostream& out, std::span<const ScoreRow> rows);

// Forecast dump CSV rows: `day,cell_x,cell_y,score,label`.
void write_forecast_header(std::ostream& out);
void write_forecast_rows(std::ostream& out, const GridForecast& f);

}  // namespace sepp
