#pragma once

#include <string>
#include <vector>

#include "gacl/config.hpp"
#include "gacl/params.hpp"
#include "gacl/tensor.hpp"

namespace gacl {

/// Sinusoidal position table, shape (length, d): even columns
/// sin(pos / 10000^(2i/d)), odd columns cos of the same argument. Constant
/// (never trained); instances are cached and shared.
Tensor positional_encoding(int64_t length, int64_t d);

/// Post-norm Transformer encoder over a (window, d) sequence: per layer,
/// multi-head scaled dot-product attention, a two-layer relu FFN, then one
/// layer_norm around the residual of the whole block.
class TemporalEncoder {
 public:
  TemporalEncoder(ParameterStore& store, const ModelConfig& cfg,
                  const std::string& prefix = "tempenc.");

  /// Full pipeline: add positions, run all layers, return the newest row.
  Tensor encode(const Tensor& x) const;

  /// All layers, optionally without the position table (the with/without
  /// pair is what makes order sensitivity testable).
  Tensor forward_layers(const Tensor& x, bool add_positions) const;

  struct LayerDetail {
    Tensor out;                     // (window, d)
    std::vector<Tensor> head_attn;  // per head, (window, window), rows sum to 1
  };
  LayerDetail encoder_layer(const Tensor& z_prev, int64_t layer) const;

  int64_t head_dim() const { return head_dim_; }

 private:
  struct Layer {
    std::vector<Tensor> W_q, W_k, W_v;  // per head, (d, d_k)
    Tensor W_hd;                        // (d, d)
    Tensor W_ffn1, b_ffn1, W_ffn2, b_ffn2;
  };

  const ModelConfig& cfg_;
  int64_t head_dim_;
  std::vector<Layer> layers_;
};

}  // namespace gacl
