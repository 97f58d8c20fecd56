// Batch entry point: ingest raw records, train, evaluate, run the ablation
// grid, or query single predictions. Every command leaves a manifest behind
// so a run can be traced back to its exact inputs.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gacl/common.hpp"
#include "gacl/harness.hpp"
#include "gacl/params.hpp"
#include "json.hpp"

namespace {

using namespace gacl;

std::string iso8601_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << text;
  if (!f) throw IoError("failed writing: " + path);
}

std::string file_stem(const std::string& path) {
  const size_t slash = path.find_last_of("/\\");
  const size_t start = slash == std::string::npos ? 0 : slash + 1;
  const size_t dot = path.find_last_of('.');
  const size_t end = (dot == std::string::npos || dot <= start) ? path.size() : dot;
  return path.substr(start, end - start);
}

/// Audit trail for one invocation; the only place timestamps are allowed,
/// so every other artifact stays byte-identical across reruns.
struct RunManifest {
  std::string command;
  std::optional<ModelConfig> config;
  std::vector<std::pair<std::string, uint64_t>> inputs;  // path, content hash
  std::vector<std::string> outputs;
  std::string started;
  std::string finished;

  void add_input(const std::string& path) { inputs.push_back({path, fnv1a64(read_file(path))}); }

  void write(const std::string& path) const {
    nlohmann::json j;
    j["command"] = command;
    if (config.has_value()) {
      j["config"] = nlohmann::json::parse(config->to_json());
      j["config_hash"] = hex64(config->hash());
    } else {
      j["config"] = nullptr;
      j["config_hash"] = nullptr;
    }
    auto ins = nlohmann::json::array();
    for (const auto& [p, h] : inputs) ins.push_back({{"path", p}, {"hash", hex64(h)}});
    j["inputs"] = ins;
    j["outputs"] = outputs;
    j["started"] = started;
    j["finished"] = finished;
    j["version"] = kVersion;
    write_file(path, j.dump(2) + "\n");
  }
};

// flag overrides; only flags the user actually passed win over the file
struct Overrides {
  std::optional<double> density;
  std::optional<std::string> ablation;
  std::optional<uint64_t> seed_split, seed_init, seed_sample;
  std::optional<int64_t> workers;

  void apply(ModelConfig& cfg) const {
    if (density) cfg.density = *density;
    if (ablation) cfg.ablation = ablation_from_cli(*ablation);
    if (seed_split) cfg.seed_split = *seed_split;
    if (seed_init) cfg.seed_init = *seed_init;
    if (seed_sample) cfg.seed_sample = *seed_sample;
    if (workers) cfg.workers = *workers;
  }

  // short spellings mirror the variant table: t / w drop a prompt signal
  static AblationMode ablation_from_cli(const std::string& s) {
    if (s == "full") return AblationMode::Full;
    if (s == "t") return AblationMode::NoTarget;
    if (s == "w") return AblationMode::NoWeight;
    if (s == "tw") return AblationMode::SemanticOnly;
    throw ValidationError("unknown ablation '" + s + "' (expected full|t|w|tw)");
  }
};

void register_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--density", ov.density, "train fraction of the split");
  cmd->add_option("--ablation", ov.ablation, "variant: full, t, w, or tw")
      ->check(CLI::IsMember({"full", "t", "w", "tw"}));
  cmd->add_option("--seed-split", ov.seed_split, "split + holdout + shuffle seed");
  cmd->add_option("--seed-init", ov.seed_init, "parameter init seed");
  cmd->add_option("--seed-sample", ov.seed_sample, "neighbor sampling seed");
  cmd->add_option("--workers", ov.workers, "harness threads (0 = all cores, 1 = reference)");
}

ModelConfig make_config(const std::string& config_path, const Overrides& ov) {
  ModelConfig cfg = config_path.empty() ? ModelConfig{} : ModelConfig::load(config_path);
  ov.apply(cfg);
  return cfg;
}

/// Hash that decides whether a checkpoint fits a run. Worker count only
/// schedules the work and epochs is a stopping point (extending training is
/// what --resume is for), so neither belongs to the identity.
uint64_t identity_hash(ModelConfig cfg) {
  cfg.workers = 0;
  cfg.epochs = 0;
  return cfg.hash();
}

// checkpoint sidecar: enough to rebuild the exact model and keep training
struct CheckpointMeta {
  ModelConfig config;
  uint64_t dataset_hash = 0;
  int64_t epochs = 0;
  int64_t optimizer_steps = 0;

  static std::string path_for(const std::string& checkpoint) { return checkpoint + ".meta.json"; }

  static CheckpointMeta load(const std::string& checkpoint) {
    const std::string p = path_for(checkpoint);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(p + ": " + e.what());
    }
    CheckpointMeta m;
    m.config = ModelConfig::from_json_text(j.at("config").dump());
    m.dataset_hash = std::stoull(j.at("dataset_hash").get<std::string>(), nullptr, 16);
    m.epochs = j.at("epochs").get<int64_t>();
    m.optimizer_steps = j.at("optimizer_steps").get<int64_t>();
    return m;
  }

  void save(const std::string& checkpoint) const {
    nlohmann::json j;
    j["config"] = nlohmann::json::parse(config.to_json());
    j["config_hash"] = hex64(config.hash());
    j["dataset_hash"] = hex64(dataset_hash);
    j["epochs"] = epochs;
    j["optimizer_steps"] = optimizer_steps;
    j["version"] = kVersion;
    write_file(path_for(checkpoint), j.dump(2) + "\n");
  }
};

/// A trained model rebuilt from its checkpoint, ready to answer queries.
struct LoadedRun {
  CheckpointMeta meta;
  std::unique_ptr<SplitDataset> split;
  std::unique_ptr<Pipeline> run;
};

LoadedRun load_run(const std::string& checkpoint, const std::string& data_path,
                   const std::string& config_path, const Overrides& ov, bool force) {
  LoadedRun out;
  out.meta = CheckpointMeta::load(checkpoint);

  ModelConfig cfg = out.meta.config;
  if (!config_path.empty()) cfg = ModelConfig::load(config_path);
  ov.apply(cfg);
  if (identity_hash(cfg) != identity_hash(out.meta.config)) {
    if (!force) {
      throw ValidationError("config does not match the checkpoint (hash " + hex64(cfg.hash()) +
                            " vs " + hex64(out.meta.config.hash()) +
                            "); pass --force to use it anyway");
    }
    log_info("config hash mismatch overridden by --force");
  }

  TemporalQoSDataset ds = load_dataset(data_path);
  if (ds.content_hash() != out.meta.dataset_hash) {
    log_info("warning: dataset differs from the one this checkpoint was trained on");
  }
  out.split = std::make_unique<SplitDataset>(std::move(ds), cfg.density, cfg.seed_split);
  out.run = std::make_unique<Pipeline>(cfg, *out.split);
  load_checkpoint(out.run->model.params(), checkpoint);
  return out;
}

int cmd_ingest(const std::string& input, const std::string& output, const ParseOptions& opts,
               const std::string& manifest_path) {
  RunManifest mf;
  mf.command = "ingest";
  mf.started = iso8601_now();
  mf.add_input(input);

  TemporalQoSDataset ds = load_dataset(input, opts);
  save_dataset(ds, output);
  std::printf("%zu records, %" PRId64 " users x %" PRId64 " services x %" PRId64
              " slices -> %s\n",
              ds.records.size(), ds.n_users, ds.n_services, ds.n_slices, output.c_str());

  mf.outputs = {output};
  mf.finished = iso8601_now();
  mf.write(manifest_path.empty() ? output + ".manifest.json" : manifest_path);
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& checkpoint_out, const Overrides& ov, const std::string& resume,
              bool force, const std::string& manifest_path) {
  RunManifest mf;
  mf.command = "train";
  mf.started = iso8601_now();
  mf.add_input(data_path);
  if (!config_path.empty()) mf.add_input(config_path);

  ModelConfig cfg = make_config(config_path, ov);
  TemporalQoSDataset ds = load_dataset(data_path);
  const uint64_t ds_hash = ds.content_hash();
  SplitDataset split(std::move(ds), cfg.density, cfg.seed_split);
  Pipeline run(cfg, split);
  mf.config = run.cfg;

  int64_t start_epoch = 0;
  int64_t prior_steps = 0;
  if (!resume.empty()) {
    CheckpointMeta prior = CheckpointMeta::load(resume);
    if (identity_hash(run.cfg) != identity_hash(prior.config)) {
      if (!force) {
        throw ValidationError("resume checkpoint was trained under a different config (hash " +
                              hex64(prior.config.hash()) + " vs " + hex64(run.cfg.hash()) +
                              "); pass --force to continue anyway");
      }
      log_info("config hash mismatch overridden by --force");
    }
    load_checkpoint(run.model.params(), resume);
    start_epoch = prior.epochs;
    prior_steps = prior.optimizer_steps;
    mf.add_input(resume);
  }

  const std::string log_path = checkpoint_out + ".trainlog.jsonl";
  std::ofstream train_log(log_path, std::ios::trunc);
  if (!train_log) throw IoError("cannot open for writing: " + log_path);

  TrainOutcome outcome = train_model(run.model, split, &train_log, start_epoch);

  save_checkpoint(run.model.params(), checkpoint_out);
  CheckpointMeta meta;
  meta.config = run.cfg;
  meta.dataset_hash = ds_hash;
  meta.epochs = outcome.epochs_run;
  meta.optimizer_steps = prior_steps + outcome.optimizer_steps;
  meta.save(checkpoint_out);

  if (outcome.log.empty()) {
    std::printf("nothing to do: checkpoint already has %" PRId64 " epochs\n", start_epoch);
  } else {
    std::printf("%" PRId64 " epochs (%" PRId64 " steps), final loss %.6g%s -> %s\n",
                outcome.epochs_run - start_epoch, outcome.optimizer_steps,
                outcome.log.back().train_loss, outcome.early_stopped ? ", stopped early" : "",
                checkpoint_out.c_str());
  }

  mf.outputs = {checkpoint_out, CheckpointMeta::path_for(checkpoint_out), log_path};
  mf.finished = iso8601_now();
  mf.write(manifest_path.empty() ? checkpoint_out + ".manifest.json" : manifest_path);
  return 0;
}

std::string render_report(const MetricsReport& r, const std::string& format) {
  if (format == "csv") return MetricsReport::csv_header() + "\n" + r.to_csv_row() + "\n";
  return r.to_json() + "\n";
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data_path,
                 const std::string& config_path, const Overrides& ov, bool force,
                 const std::string& output, const std::string& format,
                 const std::string& manifest_path) {
  RunManifest mf;
  mf.command = "evaluate";
  mf.started = iso8601_now();
  mf.add_input(checkpoint);
  mf.add_input(data_path);
  if (!config_path.empty()) mf.add_input(config_path);

  LoadedRun lr = load_run(checkpoint, data_path, config_path, ov, force);
  mf.config = lr.run->cfg;
  MetricsReport report = evaluate_model(lr.run->model, *lr.split, file_stem(data_path));
  const std::string text = render_report(report, format);
  std::fputs(text.c_str(), stdout);

  if (!output.empty()) {
    write_file(output, text);
    mf.outputs = {output};
  }
  mf.finished = iso8601_now();
  std::string mp = manifest_path;
  if (mp.empty()) mp = output.empty() ? checkpoint + ".eval.manifest.json" : output + ".manifest.json";
  mf.write(mp);
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_path,
               const std::string& output, const Overrides& ov, const std::string& format,
               const std::string& manifest_path) {
  RunManifest mf;
  mf.command = "ablate";
  mf.started = iso8601_now();
  mf.add_input(data_path);
  if (!config_path.empty()) mf.add_input(config_path);

  ModelConfig cfg = make_config(config_path, ov);
  TemporalQoSDataset ds = load_dataset(data_path);
  const std::string name = file_stem(data_path);
  SplitDataset split(std::move(ds), cfg.density, cfg.seed_split);
  {
    ModelConfig resolved = resolve_config(cfg, split.dataset());
    mf.config = resolved;
    cfg = resolved;
  }

  AblationOutcome out = run_ablation_suite(cfg, split, name, &std::cerr);
  std::fputs(out.table.c_str(), stdout);

  std::string text;
  if (format == "csv") {
    text = MetricsReport::csv_header() + "\n";
    for (const MetricsReport& r : out.reports) text += r.to_csv_row() + "\n";
    text += out.baseline.to_csv_row() + "\n";
  } else {
    nlohmann::json j;
    auto arr = nlohmann::json::array();
    for (const MetricsReport& r : out.reports) arr.push_back(nlohmann::json::parse(r.to_json()));
    j["variants"] = arr;
    j["baseline"] = nlohmann::json::parse(out.baseline.to_json());
    text = j.dump(2) + "\n";
  }
  if (!output.empty()) {
    write_file(output, text);
    mf.outputs = {output};
  }
  mf.finished = iso8601_now();
  std::string mp = manifest_path;
  if (mp.empty()) mp = output.empty() ? data_path + ".ablate.manifest.json" : output + ".manifest.json";
  mf.write(mp);
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& data_path,
                const std::string& config_path, const Overrides& ov, bool force, int64_t user,
                int64_t service, int64_t slice, const std::string& manifest_path) {
  RunManifest mf;
  mf.command = "predict";
  mf.started = iso8601_now();
  mf.add_input(checkpoint);
  mf.add_input(data_path);

  LoadedRun lr = load_run(checkpoint, data_path, config_path, ov, force);
  mf.config = lr.run->cfg;
  const double value = lr.run->model.predict_value(user, service, slice);
  std::printf("%.17g\n", value);

  mf.finished = iso8601_now();
  mf.write(manifest_path.empty() ? checkpoint + ".predict.manifest.json" : manifest_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal QoS prediction over dynamic invocation graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("gacl ") + gacl::kVersion);

  std::string input, output, data_path, config_path, checkpoint, resume, manifest_path;
  std::string format = "json";
  bool force = false;
  Overrides ov;
  ParseOptions parse_opts;
  int64_t user = 0, service = 0, slice = 0;

  CLI::App* ingest = app.add_subcommand("ingest", "validate raw records into a canonical dataset");
  ingest->add_option("input", input, "raw record file (user service slice value per line)")
      ->required();
  ingest->add_option("-o,--out", output, "canonical dataset path")->required();
  ingest->add_flag("--has-header", parse_opts.has_header, "skip the first non-comment line");
  ingest->add_option("--users", parse_opts.n_users, "declared user count (0 = infer)");
  ingest->add_option("--services", parse_opts.n_services, "declared service count (0 = infer)");
  ingest->add_option("--slices", parse_opts.n_slices, "declared slice count (0 = infer)");
  ingest->add_option("--manifest", manifest_path, "manifest path (default <out>.manifest.json)");

  CLI::App* train = app.add_subcommand("train", "fit a model and write a checkpoint");
  train->add_option("--config", config_path, "config file (json)");
  train->add_option("--data", data_path, "canonical dataset")->required();
  train->add_option("-o,--out", checkpoint, "checkpoint path")->required();
  train->add_option("--resume", resume, "continue from this checkpoint");
  train->add_flag("--force", force, "proceed past a config hash mismatch");
  train->add_option("--manifest", manifest_path, "manifest path (default <out>.manifest.json)");
  register_override_flags(train, ov);

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the held-out split");
  evaluate->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  evaluate->add_option("--data", data_path, "canonical dataset")->required();
  evaluate->add_option("--config", config_path, "config file overriding the checkpoint's");
  evaluate->add_option("-o,--out", output, "report path (also printed to stdout)");
  evaluate->add_option("--output-format", format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}));
  evaluate->add_flag("--force", force, "proceed past a config hash mismatch");
  evaluate->add_option("--manifest", manifest_path, "manifest path");
  register_override_flags(evaluate, ov);

  CLI::App* ablate = app.add_subcommand("ablate", "train and compare all four variants");
  ablate->add_option("--config", config_path, "config file (json)");
  ablate->add_option("--data", data_path, "canonical dataset")->required();
  ablate->add_option("-o,--out", output, "report path (table always goes to stdout)");
  ablate->add_option("--output-format", format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}));
  ablate->add_option("--manifest", manifest_path, "manifest path");
  register_override_flags(ablate, ov);

  CLI::App* predict = app.add_subcommand("predict", "print one prediction");
  predict->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  predict->add_option("--data", data_path, "canonical dataset")->required();
  predict->add_option("--config", config_path, "config file overriding the checkpoint's");
  predict->add_option("--user", user, "user index")->required();
  predict->add_option("--service", service, "service index")->required();
  predict->add_option("--slice", slice, "time slice to predict at")->required();
  predict->add_flag("--force", force, "proceed past a config hash mismatch");
  predict->add_option("--manifest", manifest_path, "manifest path");
  register_override_flags(predict, ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // usage problems are validation failures; --help/--version exit clean
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(input, output, parse_opts, manifest_path);
    if (train->parsed()) {
      return cmd_train(config_path, data_path, checkpoint, ov, resume, force, manifest_path);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(checkpoint, data_path, config_path, ov, force, output, format,
                          manifest_path);
    }
    if (ablate->parsed()) {
      return cmd_ablate(config_path, data_path, output, ov, format, manifest_path);
    }
    if (predict->parsed()) {
      return cmd_predict(checkpoint, data_path, config_path, ov, force, user, service, slice,
                         manifest_path);
    }
  } catch (const gacl::IoError& e) {  // includes ParseError
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const gacl::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const gacl::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
