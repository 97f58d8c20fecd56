#pragma once

#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "gacl/dataset.hpp"

namespace gacl {

// Nodes carry global ids: users at [0, n_users), services at
// [n_users, n_users + n_services).
struct GraphEdge {
  int64_t nbr = 0;      // global node id of the neighbor
  double weight = 0.0;  // min-max normalized QoS in [0, 1]
  double raw = 0.0;     // raw QoS value
};

/// Per-slice bipartite snapshots of user-service invocations, built from the
/// train split only. Immutable after construction.
class DynamicInvocationGraph {
 public:
  explicit DynamicInvocationGraph(const SplitDataset& split);

  int64_t n_users() const { return n_users_; }
  int64_t n_services() const { return n_services_; }
  int64_t n_slices() const { return n_slices_; }
  int64_t n_nodes() const { return n_users_ + n_services_; }

  int64_t user_node(int64_t u) const;
  int64_t service_node(int64_t s) const;
  bool is_user_node(int64_t v) const { return v < n_users_; }

  /// Neighbors of a node in snapshot t, sorted by neighbor id.
  std::span<const GraphEdge> neighbors(int64_t t, int64_t node) const;

  double value_min() const { return value_min_; }
  double value_max() const { return value_max_; }

  /// Debug edge-list dump, one `t from to weight raw` line per directed edge.
  void dump_snapshots(std::ostream& out) const;

 private:
  void check_node(int64_t v) const;
  void check_slice(int64_t t) const;

  int64_t n_users_ = 0, n_services_ = 0, n_slices_ = 0;
  double value_min_ = 0.0, value_max_ = 0.0;
  // one CSR per slice over global node ids
  std::vector<std::vector<int64_t>> offsets_;
  std::vector<std::vector<GraphEdge>> edges_;
};

struct HopEdge {
  int64_t from = 0;
  int64_t to = 0;
  double weight = 0.0;
};

/// Layered breadth-first expansion from a center node within one snapshot.
struct NeighborhoodSample {
  int64_t center = 0;
  int64_t slice = 0;
  int64_t cap = 0;
  std::vector<std::vector<HopEdge>> hops;  // hops[k] = edges crossed at depth k+1
};

/// Uniform without-replacement neighbor capping. The draw for a given
/// (slice, node) depends only on (seed, slice, node), never on query order,
/// so concurrent and sequential runs sample identically.
class NeighborSampler {
 public:
  NeighborSampler(const DynamicInvocationGraph& g, int64_t cap, uint64_t seed);

  /// At most cap neighbors (cap 0 = all), sorted by neighbor id.
  std::vector<GraphEdge> sample(int64_t t, int64_t node) const;

  NeighborhoodSample sample_neighborhood(int64_t node, int64_t t, int64_t hop_count) const;

  const DynamicInvocationGraph& graph() const { return g_; }
  int64_t cap() const { return cap_; }

 private:
  const DynamicInvocationGraph& g_;
  int64_t cap_;
  uint64_t seed_;
};

/// Thread-safe memo over NeighborSampler::sample keyed by (slice, node).
/// Purely a cache: hits and misses return identical lists.
class SampleCache {
 public:
  explicit SampleCache(const NeighborSampler& sampler) : sampler_(sampler) {}

  const std::vector<GraphEdge>& get(int64_t t, int64_t node);
  void clear();

 private:
  const NeighborSampler& sampler_;
  std::mutex mu_;
  std::unordered_map<uint64_t, std::unique_ptr<std::vector<GraphEdge>>> memo_;
};

}  // namespace gacl
