#include "gacl/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <thread>

#include "gacl/common.hpp"
#include "json.hpp"

namespace gacl {

using nlohmann::json;

std::string ablation_name(AblationMode m) {
  switch (m) {
    case AblationMode::Full: return "full";
    case AblationMode::NoTarget: return "no_target";
    case AblationMode::NoWeight: return "no_weight";
    case AblationMode::SemanticOnly: return "semantic_only";
  }
  throw ValidationError("bad ablation mode value");
}

AblationMode ablation_from_name(const std::string& s) {
  if (s == "full") return AblationMode::Full;
  if (s == "no_target" || s == "t") return AblationMode::NoTarget;
  if (s == "no_weight" || s == "w") return AblationMode::NoWeight;
  if (s == "semantic_only" || s == "tw") return AblationMode::SemanticOnly;
  throw ValidationError("unknown ablation '" + s +
                        "' (expected full|no_target|no_weight|semantic_only or t|w|tw)");
}

std::string target_mode_name(TargetMode m) {
  return m == TargetMode::Raw ? "raw" : "normalized";
}

TargetMode target_mode_from_name(const std::string& s) {
  if (s == "raw") return TargetMode::Raw;
  if (s == "normalized") return TargetMode::Normalized;
  throw ValidationError("unknown target_mode '" + s + "' (expected raw|normalized)");
}

int64_t ModelConfig::workers_effective() const {
  if (workers > 0) return workers;
  unsigned n = std::thread::hardware_concurrency();
  return n > 0 ? static_cast<int64_t>(n) : 1;
}

namespace {

template <typename T>
bool in_grid(T v, std::initializer_list<T> grid) {
  for (T g : grid)
    if (g == v) return true;
  return false;
}

void warn_off_grid(const char* name, const std::string& value) {
  log_info(std::string("warning: ") + name + "=" + value +
           " is outside the supported experiment grid; proceeding anyway");
}

}  // namespace

void ModelConfig::validate() const {
  if (n_users < 0 || n_services < 0 || n_slices < 0) {
    throw ValidationError("dataset dimensions cannot be negative");
  }
  if (embed_dim <= 0) throw ValidationError("embed_dim must be positive");
  if (heads <= 0) throw ValidationError("heads must be positive");
  if (embed_dim % heads != 0) {
    throw ValidationError("embed_dim (" + std::to_string(embed_dim) +
                          ") must be divisible by heads (" + std::to_string(heads) + ")");
  }
  if (embed_dim % 2 != 0) {
    throw ValidationError("embed_dim must be even for the sinusoidal position table");
  }
  if (graph_layers <= 0) throw ValidationError("graph_layers must be positive");
  if (window <= 0) throw ValidationError("window must be positive");
  if (tf_layers <= 0) throw ValidationError("tf_layers must be positive");
  if (ffn_dim < 0) throw ValidationError("ffn_dim cannot be negative");
  if (neighbor_cap < 0) throw ValidationError("neighbor_cap cannot be negative");
  if (lr <= 0) throw ValidationError("lr must be positive");
  if (reg_lambda < 0) throw ValidationError("reg_lambda cannot be negative");
  if (epochs < 0) throw ValidationError("epochs cannot be negative");
  if (batch_size <= 0) throw ValidationError("batch_size must be positive");
  if (workers < 0) throw ValidationError("workers cannot be negative");
  if (density <= 0 || density >= 1) throw ValidationError("density must lie in (0, 1)");
  if (n_slices > 0 && window >= n_slices) {
    throw ValidationError("window (" + std::to_string(window) +
                          ") must be smaller than n_slices (" + std::to_string(n_slices) +
                          ") or no training sample has a full history");
  }

  if (!in_grid<int64_t>(graph_layers, {1, 2, 3, 4})) {
    warn_off_grid("graph_layers", std::to_string(graph_layers));
  }
  if (!in_grid<int64_t>(embed_dim, {32, 64, 128, 256, 512})) {
    warn_off_grid("embed_dim", std::to_string(embed_dim));
  }
  if (!in_grid<int64_t>(window, {1, 4, 8, 16, 32})) {
    warn_off_grid("window", std::to_string(window));
  }
  if (!in_grid<int64_t>(tf_layers, {1, 2, 4, 8})) {
    warn_off_grid("tf_layers", std::to_string(tf_layers));
  }
  if (!in_grid<int64_t>(heads, {1, 2, 4, 8})) {
    warn_off_grid("heads", std::to_string(heads));
  }
  if (!in_grid<double>(density, {0.05, 0.10, 0.15, 0.20})) {
    std::ostringstream ss;
    ss << density;
    warn_off_grid("density", ss.str());
  }
}

std::string ModelConfig::to_json() const {
  json j;
  j["n_users"] = n_users;
  j["n_services"] = n_services;
  j["n_slices"] = n_slices;
  j["embed_dim"] = embed_dim;
  j["graph_layers"] = graph_layers;
  j["window"] = window;
  j["tf_layers"] = tf_layers;
  j["heads"] = heads;
  j["ffn_dim"] = ffn_dim;
  j["neighbor_cap"] = neighbor_cap;
  j["ablation"] = ablation_name(ablation);
  j["separate_encoders"] = separate_encoders;
  j["lr"] = lr;
  j["reg_lambda"] = reg_lambda;
  j["reg_include_bias"] = reg_include_bias;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["patience"] = patience;
  j["workers"] = workers;
  j["density"] = density;
  j["target_mode"] = target_mode_name(target_mode);
  j["seed_split"] = seed_split;
  j["seed_init"] = seed_init;
  j["seed_sample"] = seed_sample;
  return j.dump();
}

ModelConfig ModelConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config root must be a JSON object");

  static const std::set<std::string> known = {
      "n_users",     "n_services",   "n_slices",         "embed_dim",  "graph_layers",
      "window",      "tf_layers",    "heads",            "ffn_dim",    "neighbor_cap",
      "ablation",    "separate_encoders", "lr",          "reg_lambda", "reg_include_bias",
      "epochs",      "batch_size",   "patience",         "workers",    "density",
      "target_mode", "seed_split",   "seed_init",        "seed_sample"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ValidationError("unknown config key: " + it.key());
  }

  ModelConfig c;
  try {
    auto geti = [&](const char* k, int64_t& out) { if (j.contains(k)) out = j.at(k).get<int64_t>(); };
    auto getu = [&](const char* k, uint64_t& out) { if (j.contains(k)) out = j.at(k).get<uint64_t>(); };
    auto getd = [&](const char* k, double& out) { if (j.contains(k)) out = j.at(k).get<double>(); };
    auto getb = [&](const char* k, bool& out) { if (j.contains(k)) out = j.at(k).get<bool>(); };
    geti("n_users", c.n_users);
    geti("n_services", c.n_services);
    geti("n_slices", c.n_slices);
    geti("embed_dim", c.embed_dim);
    geti("graph_layers", c.graph_layers);
    geti("window", c.window);
    geti("tf_layers", c.tf_layers);
    geti("heads", c.heads);
    geti("ffn_dim", c.ffn_dim);
    geti("neighbor_cap", c.neighbor_cap);
    if (j.contains("ablation")) c.ablation = ablation_from_name(j.at("ablation").get<std::string>());
    getb("separate_encoders", c.separate_encoders);
    getd("lr", c.lr);
    getd("reg_lambda", c.reg_lambda);
    getb("reg_include_bias", c.reg_include_bias);
    geti("epochs", c.epochs);
    geti("batch_size", c.batch_size);
    geti("patience", c.patience);
    geti("workers", c.workers);
    getd("density", c.density);
    if (j.contains("target_mode")) {
      c.target_mode = target_mode_from_name(j.at("target_mode").get<std::string>());
    }
    getu("seed_split", c.seed_split);
    getu("seed_init", c.seed_init);
    getu("seed_sample", c.seed_sample);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_json_text(ss.str());
}

void ModelConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open config for writing: " + path);
  f << json::parse(to_json()).dump(2) << "\n";
  if (!f) throw IoError("failed writing config: " + path);
}

uint64_t ModelConfig::hash() const { return fnv1a64(to_json()); }

}  // namespace gacl
