#pragma once

#include <span>
#include <utility>
#include <vector>

#include "gacl/config.hpp"
#include "gacl/graph.hpp"
#include "gacl/params.hpp"
#include "gacl/tensor.hpp"

namespace gacl {

/// Per-snapshot feature extraction around one target invocation: multi-hop
/// attention aggregation over the bipartite neighborhood where each
/// aggregation step is biased by a prompt built from the opposite-side
/// target endpoint and the historical edge weight.
///
/// Parameter names follow `tpgat.layer{l}.{user|service}.{param}` plus the
/// shared node embedding table `embed.nodes`.
class FeatureExtractor {
 public:
  FeatureExtractor(ParameterStore& store, const ModelConfig& cfg,
                   const DynamicInvocationGraph& graph);

  /// Feature sequences (user_seq, service_seq), each window x d with rows
  /// oldest -> newest, drawn from snapshots [slice - window, slice).
  /// Requires window <= slice <= n_slices.
  std::pair<Tensor, Tensor> extract(int64_t user, int64_t service, int64_t slice) const;

  // ---- building blocks, exposed for direct verification ----

  /// sigmoid(W_attn . (x_center + x_neighbor)); rank-0.
  Tensor semantic_attention(int64_t layer, bool user_side, const Tensor& x_center,
                            const Tensor& x_neighbor) const;

  /// alpha * attn + beta with alpha/beta = tanh affine maps of the prompt.
  /// x_target may be undefined when the ablation drops the target half.
  Tensor prompt_adjust(int64_t layer, bool user_side, const Tensor& attn, const Tensor& x_target,
                       const Tensor& x_neighbor, double w_hist) const;

  struct Propagated {
    Tensor out;      // d
    Tensor weights;  // one softmax weight per neighbor; empty neighbor set -> undefined
  };

  /// One aggregation round into a center node. Neighbor order defines the
  /// weight order. x_target is ignored in modes that do not use it.
  Propagated propagate(int64_t layer, bool user_side, const Tensor& x_center,
                       std::span<const Tensor> x_neighbors, std::span<const double> w_hist,
                       const Tensor& x_target) const;

  Tensor node_embedding(int64_t node) const;

  const DynamicInvocationGraph& graph() const { return graph_; }
  const NeighborSampler& sampler() const { return sampler_; }
  SampleCache& cache() const { return cache_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  struct LayerSide {
    Tensor W_attn, W_msg, slope;
    Tensor W_w, b_w;                          // absent unless the prompt uses w_hist
    Tensor W_alpha, b_alpha, W_beta, b_beta;  // absent in semantic-only mode
  };

  const LayerSide& side_params(int64_t layer, bool user_side) const;

  struct ExtractState;  // per-call memo
  Tensor feature(int64_t node, int64_t layer, int64_t slice, ExtractState& st) const;

  const ModelConfig& cfg_;
  const DynamicInvocationGraph& graph_;
  NeighborSampler sampler_;
  mutable SampleCache cache_;
  Tensor embed_;
  std::vector<LayerSide> layers_;  // [layer * 2 + (user_side ? 0 : 1)]
};

}  // namespace gacl
