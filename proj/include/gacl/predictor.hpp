#pragma once

#include <span>

#include "gacl/config.hpp"
#include "gacl/params.hpp"
#include "gacl/tensor.hpp"

namespace gacl {

/// Fuses the temporal user and service representations into one invocation
/// feature and maps it to a non-negative QoS estimate. Parameter names:
/// `predictor.{W_inv,b_inv,prelu_slope,W_o,b_o}`.
class PredictionHead {
 public:
  PredictionHead(ParameterStore& store, const ModelConfig& cfg);

  /// relu(W_o . prelu(W_inv . concat(h_u, h_s) + b_inv) + b_o); rank-0, >= 0.
  Tensor predict(const Tensor& h_u, const Tensor& h_s) const;

 private:
  Tensor W_inv_, b_inv_, slope_, W_o_, b_o_;
};

/// Mean of (prediction - target)^2 over the batch; rank-0.
Tensor batch_mse(std::span<const Tensor> predictions, std::span<const double> targets);

/// Sum of squared entries of every weight matrix and embedding table (plus
/// biases when opted in); activation slopes and norm gains never regularize.
Tensor l2_penalty(const ParameterStore& store, bool include_bias = false);

/// batch_mse + lambda * l2_penalty; the lambda == 0 path skips the penalty
/// graph entirely.
Tensor training_loss(std::span<const Tensor> predictions, std::span<const double> targets,
                     const ParameterStore& store, double lambda, bool include_bias = false);

}  // namespace gacl
