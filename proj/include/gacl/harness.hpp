#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gacl/config.hpp"
#include "gacl/dataset.hpp"
#include "gacl/metrics.hpp"
#include "gacl/model.hpp"

namespace gacl {

/// Fills the dataset dimensions into a config (or cross-checks them when
/// already set) and runs validation.
ModelConfig resolve_config(ModelConfig cfg, const TemporalQoSDataset& ds);

/// Everything one run needs, with construction order handling the
/// config/graph/model reference chain.
struct Pipeline {
  ModelConfig cfg;
  DynamicInvocationGraph graph;
  GaclModel model;

  Pipeline(ModelConfig c, const SplitDataset& split)
      : cfg(resolve_config(std::move(c), split.dataset())), graph(split), model(cfg, graph) {}
  // the model holds references into this struct, so it must stay put
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;
};

struct EpochLog {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;  // NaN when no holdout exists
  double lr = 0.0;
  double wall_time = 0.0;  // seconds since training started; in-memory only
  std::string to_json() const;
};

struct TrainOutcome {
  std::vector<EpochLog> log;
  int64_t epochs_run = 0;  // index one past the last epoch executed
  int64_t optimizer_steps = 0;
  bool early_stopped = false;
  int64_t best_epoch = -1;    // -1: no holdout or never measured
  double best_val_mae = 0.0;  // meaningful only when best_epoch >= 0
};

/// Runs the optimization loop over the train split's eligible records
/// (slice >= window). With a positive patience a seeded 10% holdout drives
/// early stopping and the best-holdout parameters are restored at the end.
/// Touching a test record anywhere in here is a hard error.
TrainOutcome train_model(GaclModel& model, const SplitDataset& split,
                         std::ostream* train_log = nullptr, int64_t start_epoch = 0);

using PredictFn = std::function<double(int64_t user, int64_t service, int64_t slice)>;

/// Scores a predictor over every eligible test record (slice >= window) on
/// raw values. `ablation_label` names the predictor in the report.
MetricsReport evaluate_predictions(const PredictFn& fn, const SplitDataset& split,
                                   const ModelConfig& cfg, const std::string& dataset_name,
                                   const std::string& ablation_label);

MetricsReport evaluate_model(const GaclModel& model, const SplitDataset& split,
                             const std::string& dataset_name);

/// Mean raw value over the whole train split.
double global_train_mean(const SplitDataset& split);

/// Constant-prediction sanity floor: predicts the train mean everywhere.
MetricsReport baseline_global_mean(const SplitDataset& split, const ModelConfig& cfg,
                                   const std::string& dataset_name);

/// Table row label for a variant (full, gacl-t, gacl-w, gacl-tw).
std::string ablation_table_label(AblationMode m);

struct AblationOutcome {
  std::vector<MetricsReport> reports;  // full, gacl-t, gacl-w, gacl-tw order
  MetricsReport baseline;
  std::string table;  // human-readable comparison, includes the baseline row
};

/// Four train+evaluate runs sharing one split and differing only in the
/// ablation flag; warns when a variant loses to the constant baseline.
AblationOutcome run_ablation_suite(const ModelConfig& base, const SplitDataset& split,
                                   const std::string& dataset_name,
                                   std::ostream* progress = nullptr);

}  // namespace gacl
