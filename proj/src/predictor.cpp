#include "gacl/predictor.hpp"

#include <vector>

#include "gacl/common.hpp"

namespace gacl {

PredictionHead::PredictionHead(ParameterStore& store, const ModelConfig& cfg) {
  const int64_t d = cfg.embed_dim;
  W_inv_ = store.create("predictor.W_inv", {d, 2 * d}, ParamKind::Weight);
  b_inv_ = store.create("predictor.b_inv", {d}, ParamKind::Bias);
  slope_ = store.create("predictor.prelu_slope", {}, ParamKind::Activation);
  W_o_ = store.create("predictor.W_o", {d}, ParamKind::Weight);
  b_o_ = store.create("predictor.b_o", {}, ParamKind::Bias);
}

Tensor PredictionHead::predict(const Tensor& h_u, const Tensor& h_s) const {
  Tensor h_us = concat(h_u, h_s);
  Tensor h_inv = prelu(add(matmul(W_inv_, h_us), b_inv_), slope_);
  return relu(add(matmul(W_o_, h_inv), b_o_));
}

Tensor batch_mse(std::span<const Tensor> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw ValidationError("empty batch");
  if (predictions.size() != targets.size()) {
    throw ShapeError("batch holds " + std::to_string(predictions.size()) + " predictions but " +
                     std::to_string(targets.size()) + " targets");
  }
  std::vector<Tensor> sq;
  sq.reserve(predictions.size());
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].rank() != 0) throw ShapeError("predictions must be scalars");
    Tensor diff = sub(predictions[i], Tensor::scalar(targets[i]));
    sq.push_back(mul(diff, diff));
  }
  return mean(stack_rows(sq));
}

Tensor l2_penalty(const ParameterStore& store, bool include_bias) {
  Tensor total;
  for (const auto& name : store.names()) {
    const ParamKind kind = store.kind(name);
    const bool in = kind == ParamKind::Weight || kind == ParamKind::Embedding ||
                    (include_bias && kind == ParamKind::Bias);
    if (!in) continue;
    Tensor p = store.get(name);
    Tensor term = sum(mul(p, p));
    total = total.defined() ? add(total, term) : term;
  }
  return total.defined() ? total : Tensor::scalar(0.0);
}

Tensor training_loss(std::span<const Tensor> predictions, std::span<const double> targets,
                     const ParameterStore& store, double lambda, bool include_bias) {
  if (lambda < 0) throw ValidationError("regularization strength must be >= 0");
  Tensor mse = batch_mse(predictions, targets);
  if (lambda == 0) return mse;
  return add(mse, scale(l2_penalty(store, include_bias), lambda));
}

}  // namespace gacl
