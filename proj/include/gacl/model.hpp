#pragma once

#include <memory>

#include "gacl/config.hpp"
#include "gacl/graph.hpp"
#include "gacl/predictor.hpp"
#include "gacl/tempenc.hpp"
#include "gacl/tpgat.hpp"

namespace gacl {

/// The full prediction pipeline wired together: per-snapshot graph features,
/// temporal encoding of the user and service sequences, and the fusion head.
/// Parameter creation order is fixed by construction, so checkpoints of the
/// same config always carry the same layout.
class GaclModel {
 public:
  GaclModel(const ModelConfig& cfg, const DynamicInvocationGraph& graph);

  /// Differentiable prediction (model target space); rank-0.
  Tensor forward(int64_t user, int64_t service, int64_t slice) const;

  /// Grad-free prediction mapped back to the raw QoS scale.
  double predict_value(int64_t user, int64_t service, int64_t slice) const;

  /// Raw QoS <-> model target space (identity unless normalized targets).
  double to_model_target(double raw) const;
  double to_raw_value(double model_out) const;

  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const DynamicInvocationGraph& graph() const { return graph_; }
  FeatureExtractor& extractor() { return extractor_; }
  const FeatureExtractor& extractor() const { return extractor_; }

 private:
  const ModelConfig& cfg_;
  const DynamicInvocationGraph& graph_;
  ParameterStore store_;
  FeatureExtractor extractor_;
  TemporalEncoder encoder_;                       // shared, or the user-side one
  std::unique_ptr<TemporalEncoder> service_enc_;  // present only with separate encoders
  PredictionHead head_;
};

}  // namespace gacl
