#include "gacl/tpgat.hpp"

#include <unordered_map>

#include "gacl/common.hpp"

namespace gacl {

namespace {

bool uses_target(AblationMode m) {
  return m == AblationMode::Full || m == AblationMode::NoWeight;
}
bool uses_weight(AblationMode m) {
  return m == AblationMode::Full || m == AblationMode::NoTarget;
}

std::string side_prefix(int64_t layer, bool user_side) {
  return "tpgat.layer" + std::to_string(layer) + (user_side ? ".user." : ".service.");
}

}  // namespace

FeatureExtractor::FeatureExtractor(ParameterStore& store, const ModelConfig& cfg,
                                   const DynamicInvocationGraph& graph)
    : cfg_(cfg),
      graph_(graph),
      sampler_(graph, cfg.neighbor_cap, cfg.seed_sample),
      cache_(sampler_) {
  const int64_t d = cfg.embed_dim;
  embed_ = store.has("embed.nodes") ? store.get("embed.nodes")
                                    : store.create("embed.nodes", {graph.n_nodes(), d},
                                                   ParamKind::Embedding);
  const int64_t prompt_dim = cfg.ablation == AblationMode::Full ? 2 * d : d;
  for (int64_t l = 0; l < cfg.graph_layers; ++l) {
    for (bool user_side : {true, false}) {
      const std::string p = side_prefix(l, user_side);
      LayerSide ls;
      ls.W_attn = store.create(p + "W_attn", {d}, ParamKind::Weight);
      ls.W_msg = store.create(p + "W_msg", {d, d}, ParamKind::Weight);
      ls.slope = store.create(p + "prelu_slope", {}, ParamKind::Activation);
      if (uses_weight(cfg.ablation)) {
        ls.W_w = store.create(p + "W_w", {d}, ParamKind::Weight);
        // starts away from zero: the minimum-QoS edge arrives as w_hist = 0,
        // and a zero bias would put the normalized projection on the l2
        // singularity where gradients blow up
        ls.b_w = store.create(p + "b_w", {}, ParamKind::Activation);
      }
      if (cfg.ablation != AblationMode::SemanticOnly) {
        ls.W_alpha = store.create(p + "W_alpha", {prompt_dim}, ParamKind::Weight);
        ls.b_alpha = store.create(p + "b_alpha", {}, ParamKind::Bias);
        ls.W_beta = store.create(p + "W_beta", {prompt_dim}, ParamKind::Weight);
        ls.b_beta = store.create(p + "b_beta", {}, ParamKind::Bias);
      }
      layers_.push_back(std::move(ls));
    }
  }
}

const FeatureExtractor::LayerSide& FeatureExtractor::side_params(int64_t layer,
                                                                 bool user_side) const {
  if (layer < 0 || layer >= cfg_.graph_layers) {
    throw ValidationError("aggregation layer " + std::to_string(layer) + " out of range [0," +
                          std::to_string(cfg_.graph_layers) + ")");
  }
  return layers_[static_cast<size_t>(layer * 2 + (user_side ? 0 : 1))];
}

Tensor FeatureExtractor::node_embedding(int64_t node) const {
  return embedding_lookup(embed_, node);
}

Tensor FeatureExtractor::semantic_attention(int64_t layer, bool user_side, const Tensor& x_center,
                                            const Tensor& x_neighbor) const {
  const LayerSide& ls = side_params(layer, user_side);
  return sigmoid(matmul(ls.W_attn, add(x_center, x_neighbor)));
}

Tensor FeatureExtractor::prompt_adjust(int64_t layer, bool user_side, const Tensor& attn,
                                       const Tensor& x_target, const Tensor& x_neighbor,
                                       double w_hist) const {
  if (cfg_.ablation == AblationMode::SemanticOnly) return attn;
  const LayerSide& ls = side_params(layer, user_side);

  Tensor prompt;
  if (cfg_.ablation == AblationMode::Full) {
    Tensor target_half = l2_normalize(add(x_target, x_neighbor));
    Tensor weight_half = l2_normalize(add(scale(ls.W_w, w_hist), ls.b_w));
    prompt = concat(target_half, weight_half);
  } else if (cfg_.ablation == AblationMode::NoTarget) {
    prompt = l2_normalize(add(scale(ls.W_w, w_hist), ls.b_w));
  } else {  // NoWeight
    prompt = l2_normalize(add(x_target, x_neighbor));
  }
  Tensor alpha = tanh_op(add(matmul(ls.W_alpha, prompt), ls.b_alpha));
  Tensor beta = tanh_op(add(matmul(ls.W_beta, prompt), ls.b_beta));
  return add(mul(alpha, attn), beta);
}

FeatureExtractor::Propagated FeatureExtractor::propagate(int64_t layer, bool user_side,
                                                         const Tensor& x_center,
                                                         std::span<const Tensor> x_neighbors,
                                                         std::span<const double> w_hist,
                                                         const Tensor& x_target) const {
  const LayerSide& ls = side_params(layer, user_side);
  if (x_neighbors.size() != w_hist.size()) {
    throw ShapeError("neighbor features and edge weights disagree in count");
  }
  if (x_neighbors.empty()) {
    return {prelu(x_center, ls.slope), Tensor()};
  }

  std::vector<Tensor> scores;
  scores.reserve(x_neighbors.size());
  for (size_t i = 0; i < x_neighbors.size(); ++i) {
    Tensor attn = semantic_attention(layer, user_side, x_center, x_neighbors[i]);
    scores.push_back(prompt_adjust(layer, user_side, attn, x_target, x_neighbors[i], w_hist[i]));
  }
  Tensor weights = softmax(stack_rows(scores));

  Tensor agg;
  for (size_t i = 0; i < x_neighbors.size(); ++i) {
    Tensor msg = mul(select(weights, static_cast<int64_t>(i)), matmul(ls.W_msg, x_neighbors[i]));
    agg = agg.defined() ? add(agg, msg) : msg;
  }
  return {prelu(add(x_center, agg), ls.slope), weights};
}

struct FeatureExtractor::ExtractState {
  int64_t target_user_node = 0;
  int64_t target_service_node = 0;
  std::unordered_map<uint64_t, Tensor> memo;
};

Tensor FeatureExtractor::feature(int64_t node, int64_t layer, int64_t slice,
                                 ExtractState& st) const {
  const uint64_t key =
      (static_cast<uint64_t>(slice) * static_cast<uint64_t>(cfg_.graph_layers + 1) +
       static_cast<uint64_t>(layer)) *
          static_cast<uint64_t>(graph_.n_nodes()) +
      static_cast<uint64_t>(node);
  auto hit = st.memo.find(key);
  if (hit != st.memo.end()) return hit->second;

  Tensor out;
  if (layer == 0) {
    out = node_embedding(node);
  } else {
    const bool user_side = graph_.is_user_node(node);
    Tensor x_center = feature(node, layer - 1, slice, st);
    const std::vector<GraphEdge>& nbrs = cache_.get(slice, node);
    std::vector<Tensor> x_nbrs;
    std::vector<double> w;
    x_nbrs.reserve(nbrs.size());
    w.reserve(nbrs.size());
    for (const GraphEdge& e : nbrs) {
      x_nbrs.push_back(feature(e.nbr, layer - 1, slice, st));
      w.push_back(e.weight);
    }
    Tensor x_target;
    if (!nbrs.empty() && uses_target(cfg_.ablation)) {
      // aggregating into a user is prompted by the target service, and vice versa
      const int64_t prompt_node = user_side ? st.target_service_node : st.target_user_node;
      x_target = feature(prompt_node, layer - 1, slice, st);
    }
    out = propagate(layer - 1, user_side, x_center, x_nbrs, w, x_target).out;
  }
  st.memo.emplace(key, out);
  return out;
}

std::pair<Tensor, Tensor> FeatureExtractor::extract(int64_t user, int64_t service,
                                                    int64_t slice) const {
  if (slice < cfg_.window || slice > graph_.n_slices()) {
    throw ValidationError("prediction slice " + std::to_string(slice) + " needs full history [" +
                          std::to_string(cfg_.window) + "," + std::to_string(graph_.n_slices()) +
                          "]");
  }
  ExtractState st;
  st.target_user_node = graph_.user_node(user);
  st.target_service_node = graph_.service_node(service);

  std::vector<Tensor> user_rows, service_rows;
  user_rows.reserve(static_cast<size_t>(cfg_.window));
  service_rows.reserve(static_cast<size_t>(cfg_.window));
  for (int64_t t = slice - cfg_.window; t < slice; ++t) {
    user_rows.push_back(feature(st.target_user_node, cfg_.graph_layers, t, st));
    service_rows.push_back(feature(st.target_service_node, cfg_.graph_layers, t, st));
  }
  return {stack_rows(user_rows), stack_rows(service_rows)};
}

}  // namespace gacl
