#include "gacl/graph.hpp"

#include <algorithm>
#include <ostream>
#include <set>

#include "gacl/common.hpp"

namespace gacl {

DynamicInvocationGraph::DynamicInvocationGraph(const SplitDataset& split) {
  const TemporalQoSDataset& ds = split.dataset();
  n_users_ = ds.n_users;
  n_services_ = ds.n_services;
  n_slices_ = ds.n_slices;
  value_min_ = ds.value_min;
  value_max_ = ds.value_max;
  const double range = value_max_ - value_min_;

  // gather both directed copies of every train edge, then pack per-slice CSR
  struct Directed {
    int64_t t, from, to;
    double w, raw;
  };
  std::vector<Directed> all;
  const RecordView& train = split.train();
  all.reserve(train.size() * 2);
  for (size_t i = 0; i < train.size(); ++i) {
    const QoSRecord& r = train[i];
    const int64_t u = r.user;
    const int64_t s = n_users_ + r.service;
    const double w = range > 0 ? (r.value - value_min_) / range : 0.0;
    all.push_back({r.slice, u, s, w, r.value});
    all.push_back({r.slice, s, u, w, r.value});
  }
  std::sort(all.begin(), all.end(), [](const Directed& a, const Directed& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.from != b.from) return a.from < b.from;
    return a.to < b.to;
  });

  const int64_t nodes = n_nodes();
  offsets_.assign(static_cast<size_t>(n_slices_),
                  std::vector<int64_t>(static_cast<size_t>(nodes) + 1, 0));
  edges_.assign(static_cast<size_t>(n_slices_), {});
  size_t i = 0;
  for (int64_t t = 0; t < n_slices_; ++t) {
    auto& off = offsets_[static_cast<size_t>(t)];
    auto& ed = edges_[static_cast<size_t>(t)];
    while (i < all.size() && all[i].t == t) {
      off[static_cast<size_t>(all[i].from) + 1]++;
      ed.push_back({all[i].to, all[i].w, all[i].raw});
      ++i;
    }
    for (size_t v = 1; v < off.size(); ++v) off[v] += off[v - 1];
  }
}

int64_t DynamicInvocationGraph::user_node(int64_t u) const {
  if (u < 0 || u >= n_users_) {
    throw ValidationError("user index " + std::to_string(u) + " out of range [0," +
                          std::to_string(n_users_) + ")");
  }
  return u;
}

int64_t DynamicInvocationGraph::service_node(int64_t s) const {
  if (s < 0 || s >= n_services_) {
    throw ValidationError("service index " + std::to_string(s) + " out of range [0," +
                          std::to_string(n_services_) + ")");
  }
  return n_users_ + s;
}

void DynamicInvocationGraph::check_node(int64_t v) const {
  if (v < 0 || v >= n_nodes()) {
    throw ValidationError("node id " + std::to_string(v) + " out of range [0," +
                          std::to_string(n_nodes()) + ")");
  }
}

void DynamicInvocationGraph::check_slice(int64_t t) const {
  if (t < 0 || t >= n_slices_) {
    throw ValidationError("slice " + std::to_string(t) + " out of range [0," +
                          std::to_string(n_slices_) + ")");
  }
}

std::span<const GraphEdge> DynamicInvocationGraph::neighbors(int64_t t, int64_t node) const {
  check_slice(t);
  check_node(node);
  const auto& off = offsets_[static_cast<size_t>(t)];
  const auto& ed = edges_[static_cast<size_t>(t)];
  const int64_t lo = off[static_cast<size_t>(node)];
  const int64_t hi = off[static_cast<size_t>(node) + 1];
  return {ed.data() + lo, static_cast<size_t>(hi - lo)};
}

void DynamicInvocationGraph::dump_snapshots(std::ostream& out) const {
  for (int64_t t = 0; t < n_slices_; ++t) {
    for (int64_t v = 0; v < n_nodes(); ++v) {
      for (const GraphEdge& e : neighbors(t, v)) {
        out << t << ' ' << v << ' ' << e.nbr << ' ' << e.weight << ' ' << e.raw << '\n';
      }
    }
  }
}

NeighborSampler::NeighborSampler(const DynamicInvocationGraph& g, int64_t cap, uint64_t seed)
    : g_(g), cap_(cap), seed_(seed) {
  if (cap < 0) throw ValidationError("neighbor cap cannot be negative");
}

std::vector<GraphEdge> NeighborSampler::sample(int64_t t, int64_t node) const {
  auto nbrs = g_.neighbors(t, node);
  const int64_t deg = static_cast<int64_t>(nbrs.size());
  if (cap_ == 0 || deg <= cap_) return {nbrs.begin(), nbrs.end()};

  // partial Fisher-Yates over positions; draw stream fixed by (seed, t, node)
  Rng rng(mix64(seed_, static_cast<uint64_t>(t), static_cast<uint64_t>(node)));
  std::vector<int64_t> pos(static_cast<size_t>(deg));
  for (int64_t i = 0; i < deg; ++i) pos[static_cast<size_t>(i)] = i;
  for (int64_t i = 0; i < cap_; ++i) {
    const int64_t j = i + static_cast<int64_t>(rng.below(static_cast<uint64_t>(deg - i)));
    std::swap(pos[static_cast<size_t>(i)], pos[static_cast<size_t>(j)]);
  }
  pos.resize(static_cast<size_t>(cap_));
  std::sort(pos.begin(), pos.end());  // adjacency is id-sorted, so position order = id order
  std::vector<GraphEdge> out;
  out.reserve(pos.size());
  for (int64_t p : pos) out.push_back(nbrs[static_cast<size_t>(p)]);
  return out;
}

NeighborhoodSample NeighborSampler::sample_neighborhood(int64_t node, int64_t t,
                                                        int64_t hop_count) const {
  if (hop_count < 1) throw ValidationError("hop count must be at least 1");
  NeighborhoodSample ns;
  ns.center = node;
  ns.slice = t;
  ns.cap = cap_;
  std::vector<int64_t> frontier = {node};
  for (int64_t h = 0; h < hop_count; ++h) {
    std::vector<HopEdge> layer;
    std::set<int64_t> next;
    for (int64_t v : frontier) {
      for (const GraphEdge& e : sample(t, v)) {
        layer.push_back({v, e.nbr, e.weight});
        next.insert(e.nbr);
      }
    }
    ns.hops.push_back(std::move(layer));
    frontier.assign(next.begin(), next.end());
  }
  return ns;
}

const std::vector<GraphEdge>& SampleCache::get(int64_t t, int64_t node) {
  const uint64_t key =
      static_cast<uint64_t>(t) * static_cast<uint64_t>(sampler_.graph().n_nodes()) +
      static_cast<uint64_t>(node);
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = memo_.find(key);
    if (it != memo_.end()) return *it->second;
  }
  auto fresh = std::make_unique<std::vector<GraphEdge>>(sampler_.sample(t, node));
  std::lock_guard<std::mutex> lock(mu_);
  auto [it, inserted] = memo_.emplace(key, std::move(fresh));
  return *it->second;
}

void SampleCache::clear() {
  std::lock_guard<std::mutex> lock(mu_);
  memo_.clear();
}

}  // namespace gacl
