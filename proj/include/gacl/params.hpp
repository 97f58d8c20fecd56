#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gacl/tensor.hpp"

namespace gacl {

// Initialization family for a named parameter.
enum class ParamKind {
  Weight,      // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), fan_in = last dim
  Bias,        // zeros
  Embedding,   // normal(0, 0.1)
  Activation,  // PReLU slope, 0.25
  Norm,        // ones
};

/// Insertion-ordered registry of trainable tensors. Initialization draws
/// from a per-parameter stream seeded by (init_seed, name), so values do not
/// depend on creation order or on what else exists in the store.
class ParameterStore {
 public:
  explicit ParameterStore(uint64_t init_seed) : init_seed_(init_seed) {}

  Tensor create(const std::string& name, Shape shape, ParamKind kind);
  Tensor get(const std::string& name) const;
  ParamKind kind(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::string>& names() const { return order_; }
  std::vector<Tensor> all() const;
  int64_t total_parameters() const;
  uint64_t init_seed() const { return init_seed_; }

  void zero_grads();

 private:
  uint64_t init_seed_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> params_;
  std::unordered_map<std::string, ParamKind> kinds_;
  std::unordered_map<std::string, size_t> index_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: p -= lr * wd * p, not folded into the gradient
  bool decay_bias = false;    // decay applies to Weight/Embedding; this opts biases in
};

/// AdamW over every parameter in a store. step() consumes and clears the
/// accumulated gradients; a parameter with no gradient is a hard error so a
/// miswired graph cannot silently freeze weights.
class AdamW {
 public:
  AdamW(ParameterStore& store, AdamWConfig cfg);

  void step();
  int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  ParameterStore& store_;
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::unordered_map<std::string, std::vector<double>> m_, v_;
};

/// Binary parameter snapshot: magic, format version, then each parameter in
/// store order as (name, dims, f64 values). Deterministic bytes for a
/// deterministic store.
void save_checkpoint(const ParameterStore& store, const std::string& path);

/// Loads values into an already-constructed store; the parameter set and
/// every shape must match exactly.
void load_checkpoint(ParameterStore& store, const std::string& path);

}  // namespace gacl
