#pragma once

#include <cstdint>
#include <string>

namespace gacl {

// Which prompt signals adjust the semantic attention during aggregation.
enum class AblationMode {
  Full,          // prompt = [target context || historical-weight projection]
  NoTarget,      // prompt = historical-weight projection only
  NoWeight,      // prompt = target context only
  SemanticOnly,  // no prompt adjustment at all; no prompt parameters exist
};

std::string ablation_name(AblationMode m);
AblationMode ablation_from_name(const std::string& s);

enum class TargetMode { Raw, Normalized };

std::string target_mode_name(TargetMode m);
TargetMode target_mode_from_name(const std::string& s);

/// Every knob of the pipeline, as plain data. validate() enforces hard rules
/// and logs warnings when a value leaves the supported experiment grid.
struct ModelConfig {
  // dataset dimensions (filled from data at training time)
  int64_t n_users = 0;
  int64_t n_services = 0;
  int64_t n_slices = 0;

  // architecture
  int64_t embed_dim = 128;
  int64_t graph_layers = 2;
  int64_t window = 32;  // trailing snapshots fed to the temporal encoder
  int64_t tf_layers = 8;
  int64_t heads = 8;
  int64_t ffn_dim = 0;        // 0 -> 4 * embed_dim
  int64_t neighbor_cap = 64;  // sampled neighbors per node per hop; 0 = exact (no cap)
  AblationMode ablation = AblationMode::Full;
  bool separate_encoders = false;  // user/service sequences get distinct encoder weights

  // optimization
  double lr = 1e-3;
  double reg_lambda = 1e-4;  // L2 strength; doubles as the decoupled weight decay
  bool reg_include_bias = false;
  int64_t epochs = 200;  // 0 = return the initialized model untouched
  int64_t batch_size = 256;
  int64_t patience = 10;  // early stop on validation MAE; <= 0 disables the holdout
  int64_t workers = 0;    // 0 = one per available core

  // data handling
  double density = 0.05;  // fraction of records kept for training
  TargetMode target_mode = TargetMode::Raw;
  uint64_t seed_split = 1;
  uint64_t seed_init = 2;
  uint64_t seed_sample = 3;

  int64_t ffn_dim_effective() const { return ffn_dim > 0 ? ffn_dim : 4 * embed_dim; }
  int64_t workers_effective() const;

  void validate() const;

  /// Canonical JSON (sorted keys, no whitespace); hash-stable.
  std::string to_json() const;
  static ModelConfig from_json_text(const std::string& text);
  static ModelConfig load(const std::string& path);
  void save(const std::string& path) const;

  /// FNV-1a over the canonical JSON.
  uint64_t hash() const;
};

}  // namespace gacl
