#include "gacl/model.hpp"

#include "gacl/common.hpp"

namespace gacl {

GaclModel::GaclModel(const ModelConfig& cfg, const DynamicInvocationGraph& graph)
    : cfg_(cfg),
      graph_(graph),
      store_(cfg.seed_init),
      extractor_(store_, cfg_, graph_),
      encoder_(store_, cfg_, cfg.separate_encoders ? "tempenc.user." : "tempenc."),
      service_enc_(cfg.separate_encoders
                       ? std::make_unique<TemporalEncoder>(store_, cfg_, "tempenc.service.")
                       : nullptr),
      head_(store_, cfg_) {}

Tensor GaclModel::forward(int64_t user, int64_t service, int64_t slice) const {
  auto [u_seq, s_seq] = extractor_.extract(user, service, slice);
  Tensor h_u = encoder_.encode(u_seq);
  Tensor h_s = (service_enc_ ? *service_enc_ : encoder_).encode(s_seq);
  return head_.predict(h_u, h_s);
}

double GaclModel::predict_value(int64_t user, int64_t service, int64_t slice) const {
  NoGradGuard ng;
  return to_raw_value(forward(user, service, slice).item());
}

double GaclModel::to_model_target(double raw) const {
  if (cfg_.target_mode == TargetMode::Raw) return raw;
  const double range = graph_.value_max() - graph_.value_min();
  return range > 0 ? (raw - graph_.value_min()) / range : 0.0;
}

double GaclModel::to_raw_value(double model_out) const {
  if (cfg_.target_mode == TargetMode::Raw) return model_out;
  const double range = graph_.value_max() - graph_.value_min();
  return model_out * range + graph_.value_min();
}

}  // namespace gacl
