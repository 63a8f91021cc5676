#pragma once

// Graph views of a channel sample.
//
// link_graph: one node per BS-user link, feature [Re h_k ; Im h_k] in R^{2N},
//   fully connected by directed edges without self-edges.
// bipartite: N antenna nodes (indices 0..N-1) then K user nodes (N..N+K-1);
//   antenna<->user edges in both directions carrying [Re H[k,m], Im H[k,m]].
//   Node features are learned per-type constants, so none are stored here.
//
// Edges are always stored sorted by (dst, src) so that permuted graphs can be
// compared elementwise.

#include "wgnn/autodiff.hpp"
#include "wgnn/channel.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace wgnn {

enum class GraphKind { link_graph, bipartite };
enum class NodeType { link, antenna, user };
enum class EdgeFeatureMode { none, correlation };

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct RadioGraph {
  GraphKind kind = GraphKind::link_graph;
  int k_users = 0;
  int n_antennas = 0;
  std::int64_t sample_id = 0;
  std::vector<NodeType> node_types;
  std::optional<ad::Tensor> node_features;
  std::vector<Edge> edges;
  std::optional<ad::Tensor> edge_features;

  std::size_t num_nodes() const { return node_types.size(); }
  std::size_t node_feature_dim() const { return node_features ? node_features->cols() : 0; }
  std::size_t edge_feature_dim() const { return edge_features ? edge_features->cols() : 0; }

  friend bool operator==(const RadioGraph&, const RadioGraph&) = default;
};

// Row i of the permuted object is row perm[i] of the original.
struct PermutationMap {
  std::vector<std::size_t> user_perm;
  std::vector<std::size_t> antenna_perm;

  static PermutationMap identity(std::size_t k_users, std::size_t n_antennas);
  PermutationMap inverse() const;
  void validate() const;
};

RadioGraph build_link_graph(const ChannelSample& sample,
                            EdgeFeatureMode mode = EdgeFeatureMode::none);
RadioGraph build_bipartite_graph(const ChannelSample& sample);
RadioGraph build_graph(const ChannelSample& sample, GraphKind kind,
                       EdgeFeatureMode mode = EdgeFeatureMode::none);
// Recovers the channel carried by a graph (node features or edge features).
ChannelSample channel_of(const RadioGraph& graph);

ChannelSample apply_permutation(const ChannelSample& sample, const PermutationMap& perm);
RadioGraph apply_permutation(const RadioGraph& graph, const PermutationMap& perm);
// Beam matrix is N x K: columns follow users, rows follow antennas.
CMatrix apply_permutation(const CMatrix& beams, const PermutationMap& perm);

// Disjoint union of graphs for batched evaluation. Node and edge indices are
// offset per graph; graph_of_node maps every node back to its graph.
struct GraphBatch {
  GraphKind kind = GraphKind::link_graph;
  std::size_t num_graphs = 0;
  std::size_t num_nodes = 0;
  int n_antennas = 0;
  std::vector<NodeType> node_types;
  std::vector<std::size_t> graph_of_node;
  std::optional<ad::Tensor> node_features;
  std::vector<std::size_t> edge_src;
  std::vector<std::size_t> edge_dst;
  std::optional<ad::Tensor> edge_features;
  // Users of the whole batch in (graph, user) order, and their node index.
  std::vector<std::size_t> user_nodes;
  std::vector<std::size_t> graph_of_user;
  std::vector<int> users_per_graph;
  // bipartite only: antenna node of each antenna in (graph, antenna) order.
  std::vector<std::size_t> antenna_nodes;
};

GraphBatch make_batch(std::span<const RadioGraph> graphs);

}  // namespace wgnn
