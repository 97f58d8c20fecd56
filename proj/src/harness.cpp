#include "gacl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>
#include <unordered_map>

#include "gacl/common.hpp"
#include "gacl/predictor.hpp"
#include "json.hpp"

namespace gacl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Index-deterministic parallel loop: results must be written into
/// per-index slots, never reduced in completion order.
void run_parallel(size_t n, int64_t workers, const std::function<void(size_t)>& fn) {
  const size_t w = std::min<size_t>(n, workers <= 1 ? 1 : static_cast<size_t>(workers));
  if (w <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (size_t t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (size_t i = t; i < n; i += w) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct Target {
  int64_t user = 0, service = 0, slice = 0;
  double raw = 0.0;
};

std::vector<Target> eligible_records(const RecordView& view, int64_t window) {
  std::vector<Target> out;
  for (size_t i = 0; i < view.size(); ++i) {
    const QoSRecord& r = view[i];
    if (r.slice >= window) out.push_back({r.user, r.service, r.slice, r.value});
  }
  return out;
}

}  // namespace

ModelConfig resolve_config(ModelConfig cfg, const TemporalQoSDataset& ds) {
  auto fit = [](int64_t& field, int64_t actual, const char* what) {
    if (field == 0) {
      field = actual;
    } else if (field != actual) {
      throw ValidationError(std::string("config declares ") + std::to_string(field) + " " + what +
                            " but the dataset has " + std::to_string(actual));
    }
  };
  fit(cfg.n_users, ds.n_users, "users");
  fit(cfg.n_services, ds.n_services, "services");
  fit(cfg.n_slices, ds.n_slices, "time slices");
  cfg.validate();
  return cfg;
}

std::string EpochLog::to_json() const {
  // wall_time stays off disk: persisted outputs must be byte-identical
  // across reruns, and timestamps belong to the manifest alone
  nlohmann::json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  if (std::isnan(val_mae)) {
    j["val_mae"] = nullptr;
  } else {
    j["val_mae"] = val_mae;
  }
  j["lr"] = lr;
  return j.dump();
}

TrainOutcome train_model(GaclModel& model, const SplitDataset& split, std::ostream* train_log,
                         int64_t start_epoch) {
  const ModelConfig& cfg = model.config();
  ParameterStore& ps = model.params();
  const uint64_t test_reads_before = split.test().access_count();

  const std::vector<Target> eligible = eligible_records(split.train(), cfg.window);
  if (eligible.empty()) {
    throw ValidationError("no eligible training targets: no train record has slice >= " +
                          std::to_string(cfg.window));
  }

  // seeded holdout for early stopping; too-small sets fall back to no holdout
  std::vector<size_t> order(eligible.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<size_t> fit_idx = order, val_idx;
  if (cfg.patience > 0) {
    Rng hold_rng(mix64(cfg.seed_split, fnv1a64("holdout")));
    hold_rng.shuffle(order);
    const size_t n_val = order.size() / 10;
    val_idx.assign(order.begin(), order.begin() + n_val);
    fit_idx.assign(order.begin() + n_val, order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(fit_idx.begin(), fit_idx.end());
    if (val_idx.empty()) {
      log_info("holdout disabled: fewer than 10 eligible records");
    }
  }

  AdamW opt(ps, {.lr = cfg.lr,
                 .weight_decay = cfg.reg_lambda,
                 .decay_bias = cfg.reg_include_bias});

  TrainOutcome out;
  out.epochs_run = start_epoch;
  double best_val = 0.0;
  int64_t stale = 0;
  std::unordered_map<std::string, std::vector<double>> best_params;
  const int64_t workers = cfg.workers_effective();
  const size_t batch = static_cast<size_t>(cfg.batch_size);
  const auto t0 = Clock::now();

  auto holdout_mae = [&] {
    std::vector<double> pred(val_idx.size()), actual(val_idx.size());
    run_parallel(val_idx.size(), workers, [&](size_t k) {
      const Target& tg = eligible[val_idx[k]];
      pred[k] = model.predict_value(tg.user, tg.service, tg.slice);
      actual[k] = tg.raw;
    });
    return mae(pred, actual);
  };

  for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> perm = fit_idx;
    Rng(mix64(cfg.seed_split, fnv1a64("order"), static_cast<uint64_t>(epoch))).shuffle(perm);

    double sq_total = 0.0;
    for (size_t b0 = 0; b0 < perm.size(); b0 += batch) {
      const size_t b1 = std::min(perm.size(), b0 + batch);
      const size_t n = b1 - b0;
      std::vector<GradSink> sinks(n);
      std::vector<double> sq(n);
      run_parallel(n, workers, [&](size_t k) {
        const Target& tg = eligible[perm[b0 + k]];
        Tensor pred = model.forward(tg.user, tg.service, tg.slice);
        Tensor diff = sub(pred, Tensor::scalar(model.to_model_target(tg.raw)));
        Tensor squared = mul(diff, diff);
        sq[k] = squared.item();
        backward(scale(squared, 1.0 / static_cast<double>(n)), sinks[k]);
      });
      // merged in item order: gradient bytes cannot depend on worker count
      for (GradSink& s : sinks) s.merge_into_leaves();
      if (cfg.reg_lambda > 0) {
        backward(scale(l2_penalty(ps, cfg.reg_include_bias), cfg.reg_lambda));
      }
      opt.step();
      ++out.optimizer_steps;
      sq_total += std::accumulate(sq.begin(), sq.end(), 0.0);
    }

    EpochLog el;
    el.epoch = epoch;
    el.train_loss = sq_total / static_cast<double>(perm.size());
    if (cfg.reg_lambda > 0) {
      NoGradGuard ng;
      el.train_loss += cfg.reg_lambda * l2_penalty(ps, cfg.reg_include_bias).item();
    }
    el.val_mae = std::numeric_limits<double>::quiet_NaN();
    el.lr = cfg.lr;

    bool stop = false;
    if (!val_idx.empty()) {
      el.val_mae = holdout_mae();
      if (out.best_epoch < 0 || el.val_mae < best_val) {
        best_val = el.val_mae;
        out.best_epoch = epoch;
        stale = 0;
        best_params.clear();
        for (const auto& name : ps.names()) {
          Tensor p = ps.get(name);
          best_params.emplace(name, std::vector<double>(p.values().begin(), p.values().end()));
        }
      } else if (++stale >= cfg.patience) {
        stop = true;
      }
    }

    el.wall_time = seconds_since(t0);
    out.log.push_back(el);
    if (train_log) *train_log << el.to_json() << "\n";
    out.epochs_run = epoch + 1;
    if (stop) {
      out.early_stopped = true;
      log_info("stopping early at epoch " + std::to_string(epoch) + ": holdout mae stuck at " +
               std::to_string(best_val) + " since epoch " + std::to_string(out.best_epoch));
      break;
    }
  }

  if (out.best_epoch >= 0) {
    out.best_val_mae = best_val;
    for (const auto& [name, vals] : best_params) {
      Tensor p = ps.get(name);
      auto dst = p.mutable_values();
      std::copy(vals.begin(), vals.end(), dst.begin());
      p.zero_grad();
    }
  }

  if (split.test().access_count() != test_reads_before) {
    throw ValidationError("leakage: test-split records were read during training");
  }
  return out;
}

MetricsReport evaluate_predictions(const PredictFn& fn, const SplitDataset& split,
                                   const ModelConfig& cfg, const std::string& dataset_name,
                                   const std::string& ablation_label) {
  const std::vector<Target> targets = eligible_records(split.test(), cfg.window);
  if (targets.empty()) {
    throw ValidationError("no eligible test records: no test record has slice >= " +
                          std::to_string(cfg.window));
  }
  std::vector<double> pred(targets.size()), actual(targets.size());
  const auto t0 = Clock::now();
  run_parallel(targets.size(), cfg.workers_effective(), [&](size_t k) {
    const Target& tg = targets[k];
    pred[k] = fn(tg.user, tg.service, tg.slice);
    actual[k] = tg.raw;
  });

  MetricsReport report;
  report.dataset_name = dataset_name;
  report.density = split.density();
  report.ablation = ablation_label;
  report.mae = mae(pred, actual);
  report.nmae = nmae(pred, actual);
  report.rmse = rmse(pred, actual);
  report.n_eval = static_cast<int64_t>(targets.size());
  report.wall_time = seconds_since(t0);
  report.config_hash = cfg.hash();
  return report;
}

MetricsReport evaluate_model(const GaclModel& model, const SplitDataset& split,
                             const std::string& dataset_name) {
  return evaluate_predictions(
      [&](int64_t u, int64_t s, int64_t t) { return model.predict_value(u, s, t); }, split,
      model.config(), dataset_name, ablation_name(model.config().ablation));
}

double global_train_mean(const SplitDataset& split) {
  const RecordView& train = split.train();
  if (train.empty()) throw ValidationError("train split is empty");
  double total = 0.0;
  for (size_t i = 0; i < train.size(); ++i) total += train[i].value;
  return total / static_cast<double>(train.size());
}

MetricsReport baseline_global_mean(const SplitDataset& split, const ModelConfig& cfg,
                                   const std::string& dataset_name) {
  const double mean_value = global_train_mean(split);
  return evaluate_predictions([mean_value](int64_t, int64_t, int64_t) { return mean_value; },
                              split, cfg, dataset_name, "global_mean");
}

std::string ablation_table_label(AblationMode m) {
  switch (m) {
    case AblationMode::Full: return "full";
    case AblationMode::NoTarget: return "gacl-t";
    case AblationMode::NoWeight: return "gacl-w";
    case AblationMode::SemanticOnly: return "gacl-tw";
  }
  throw ValidationError("unknown ablation mode");
}

AblationOutcome run_ablation_suite(const ModelConfig& base, const SplitDataset& split,
                                   const std::string& dataset_name, std::ostream* progress) {
  static constexpr AblationMode kModes[] = {AblationMode::Full, AblationMode::NoTarget,
                                            AblationMode::NoWeight, AblationMode::SemanticOnly};
  AblationOutcome out;
  out.baseline = baseline_global_mean(split, base, dataset_name);
  for (AblationMode mode : kModes) {
    ModelConfig cfg = base;
    cfg.ablation = mode;
    if (progress) *progress << "training variant " << ablation_table_label(mode) << "\n";
    Pipeline run(cfg, split);
    train_model(run.model, split);
    MetricsReport report = evaluate_model(run.model, split, dataset_name);
    if (report.mae > out.baseline.mae) {
      log_info("warning: variant " + ablation_table_label(mode) + " (mae " +
               std::to_string(report.mae) + ") does not beat the global-mean baseline (mae " +
               std::to_string(out.baseline.mae) + ")");
    }
    out.reports.push_back(std::move(report));
  }

  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %12s %12s %12s %8s\n", "variant", "mae", "nmae", "rmse",
                "n_eval");
  out.table = line;
  auto add_row = [&](const std::string& label, const MetricsReport& r) {
    std::snprintf(line, sizeof(line), "%-12s %12.6f %12.6f %12.6f %8lld\n", label.c_str(), r.mae,
                  r.nmae, r.rmse, static_cast<long long>(r.n_eval));
    out.table += line;
  };
  for (size_t i = 0; i < out.reports.size(); ++i) add_row(ablation_table_label(kModes[i]), out.reports[i]);
  add_row("global_mean", out.baseline);
  return out;
}

}  // namespace gacl
