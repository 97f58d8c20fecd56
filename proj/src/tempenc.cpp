#include "gacl/tempenc.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "gacl/common.hpp"

namespace gacl {

Tensor positional_encoding(int64_t length, int64_t d) {
  if (length <= 0) throw ShapeError("position table length must be positive");
  if (d <= 0 || d % 2 != 0) {
    throw ShapeError("position table width must be a positive even number, got " +
                     std::to_string(d));
  }
  static std::mutex mu;
  static std::map<std::pair<int64_t, int64_t>, Tensor> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find({length, d});
  if (it != cache.end()) return it->second;

  std::vector<double> v(static_cast<size_t>(length * d));
  for (int64_t pos = 0; pos < length; ++pos) {
    for (int64_t i = 0; i < d / 2; ++i) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
      v[static_cast<size_t>(pos * d + 2 * i)] = std::sin(angle);
      v[static_cast<size_t>(pos * d + 2 * i + 1)] = std::cos(angle);
    }
  }
  Tensor pe = Tensor::constant({length, d}, std::move(v));
  cache.emplace(std::make_pair(length, d), pe);
  return pe;
}

TemporalEncoder::TemporalEncoder(ParameterStore& store, const ModelConfig& cfg,
                                 const std::string& prefix)
    : cfg_(cfg), head_dim_(cfg.embed_dim / cfg.heads) {
  if (cfg.heads <= 0 || cfg.embed_dim % cfg.heads != 0) {
    throw ValidationError("embedding width " + std::to_string(cfg.embed_dim) +
                          " must divide evenly across " + std::to_string(cfg.heads) + " heads");
  }
  const int64_t d = cfg.embed_dim;
  const int64_t f = cfg.ffn_dim_effective();
  for (int64_t l = 0; l < cfg.tf_layers; ++l) {
    const std::string lp = prefix + "layer" + std::to_string(l) + ".";
    Layer layer;
    for (int64_t h = 0; h < cfg.heads; ++h) {
      const std::string hp = lp + "head" + std::to_string(h) + ".";
      layer.W_q.push_back(store.create(hp + "W_q", {d, head_dim_}, ParamKind::Weight));
      layer.W_k.push_back(store.create(hp + "W_k", {d, head_dim_}, ParamKind::Weight));
      layer.W_v.push_back(store.create(hp + "W_v", {d, head_dim_}, ParamKind::Weight));
    }
    layer.W_hd = store.create(lp + "W_hd", {d, d}, ParamKind::Weight);
    layer.W_ffn1 = store.create(lp + "W_ffn1", {d, f}, ParamKind::Weight);
    layer.b_ffn1 = store.create(lp + "b_ffn1", {f}, ParamKind::Bias);
    layer.W_ffn2 = store.create(lp + "W_ffn2", {f, d}, ParamKind::Weight);
    layer.b_ffn2 = store.create(lp + "b_ffn2", {d}, ParamKind::Bias);
    layers_.push_back(std::move(layer));
  }
}

TemporalEncoder::LayerDetail TemporalEncoder::encoder_layer(const Tensor& z_prev,
                                                            int64_t layer) const {
  if (layer < 0 || layer >= static_cast<int64_t>(layers_.size())) {
    throw ValidationError("encoder layer " + std::to_string(layer) + " out of range");
  }
  if (z_prev.rank() != 2 || z_prev.dim(1) != cfg_.embed_dim) {
    throw ShapeError("encoder input must be (window, " + std::to_string(cfg_.embed_dim) +
                     "), got " + shape_str(z_prev.shape()));
  }
  const Layer& p = layers_[static_cast<size_t>(layer)];
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(head_dim_));

  LayerDetail detail;
  std::vector<Tensor> heads;
  heads.reserve(p.W_q.size());
  for (size_t h = 0; h < p.W_q.size(); ++h) {
    Tensor q = matmul(z_prev, p.W_q[h]);
    Tensor k = matmul(z_prev, p.W_k[h]);
    Tensor v = matmul(z_prev, p.W_v[h]);
    Tensor attn = softmax(scale(matmul(q, transpose(k)), inv_sqrt_dk));
    detail.head_attn.push_back(attn);
    heads.push_back(matmul(attn, v));
  }
  Tensor mh = matmul(concat(heads), p.W_hd);
  Tensor hidden = relu(add(matmul(mh, p.W_ffn1), p.b_ffn1));
  Tensor ffn = add(matmul(hidden, p.W_ffn2), p.b_ffn2);
  detail.out = layer_norm(add(ffn, z_prev));
  return detail;
}

Tensor TemporalEncoder::forward_layers(const Tensor& x, bool add_positions) const {
  Tensor z = add_positions ? add(x, positional_encoding(x.dim(0), x.dim(1))) : x;
  for (int64_t l = 0; l < static_cast<int64_t>(layers_.size()); ++l) {
    z = encoder_layer(z, l).out;
  }
  return z;
}

Tensor TemporalEncoder::encode(const Tensor& x) const {
  Tensor z = forward_layers(x, true);
  return select(z, z.dim(0) - 1);
}

}  // namespace gacl
