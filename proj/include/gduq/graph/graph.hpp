#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gduq/core/errors.hpp"
#include "gduq/core/tensor.hpp"

namespace gduq {

using Edge = std::pair<std::size_t, std::size_t>;

/// Attributed graph with a graph-level class label. Undirected graphs store
/// each edge in both directions.
struct Graph {
  std::size_t num_nodes = 0;
  Tensor features;  // num_nodes x d
  std::vector<Edge> edges;
  std::optional<Tensor> edge_features;  // m x d_e, carried but unused by the models
  int label = 0;

  std::size_t feature_dim() const noexcept { return features.cols(); }
  std::size_t num_edges() const noexcept { return edges.size(); }

  /// Throws if any invariant is broken.
  void validate() const {
    if (features.rows() != num_nodes || (num_nodes > 0 && features.rank() != 2)) {
      throw SchemaError("graph has " + std::to_string(num_nodes) + " nodes but feature matrix " +
                        shape_string(features.shape));
    }
    for (const auto& [s, d] : edges) {
      if (s >= num_nodes || d >= num_nodes) {
        throw SchemaError("edge (" + std::to_string(s) + ", " + std::to_string(d) + ") outside [0, " +
                          std::to_string(num_nodes) + ")");
      }
    }
    if (edge_features && edge_features->rows() != edges.size()) {
      throw SchemaError("edge feature rows do not match edge count");
    }
    if (label < 0) throw SchemaError("negative graph label");
  }

  bool is_symmetric() const {
    std::vector<Edge> sorted = edges;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [s, d] : edges) {
      if (!std::binary_search(sorted.begin(), sorted.end(), Edge{d, s})) return false;
    }
    return true;
  }
};

/// Adds (u, v) and (v, u); a self loop is stored once.
inline void add_undirected_edge(Graph& g, std::size_t u, std::size_t v) {
  g.edges.emplace_back(u, v);
  if (u != v) g.edges.emplace_back(v, u);
}

/// Neighbor lists in edge order.
inline std::vector<std::vector<std::size_t>> adjacency_lists(const Graph& g) {
  std::vector<std::vector<std::size_t>> adj(g.num_nodes);
  for (const auto& [s, d] : g.edges) adj[s].push_back(d);
  return adj;
}

inline std::vector<std::size_t> in_degrees(const Graph& g) {
  std::vector<std::size_t> deg(g.num_nodes, 0);
  for (const auto& e : g.edges) ++deg[e.second];
  return deg;
}

inline bool is_connected(const Graph& g) {
  if (g.num_nodes == 0) return true;
  const auto adj = adjacency_lists(g);
  std::vector<char> seen(g.num_nodes, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t visited = 1;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++visited;
        stack.push_back(v);
      }
    }
  }
  return visited == g.num_nodes;
}

/// Relabels nodes: node i of the input becomes node perm[i] of the output.
inline Graph permute_nodes(const Graph& g, const std::vector<std::size_t>& perm) {
  if (perm.size() != g.num_nodes) throw ShapeError("permute_nodes: permutation length differs from node count");
  Graph out = g;
  const std::size_t d = g.feature_dim();
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    std::copy_n(g.features.values.data() + i * d, d, out.features.values.data() + perm[i] * d);
  }
  for (auto& [s, t] : out.edges) {
    s = perm[s];
    t = perm[t];
  }
  return out;
}

/// Disjoint union of graphs, used as a single mini-batch.
struct GraphBatch {
  Tensor features;  // total_nodes x d
  std::vector<Edge> edges;
  std::vector<std::size_t> graph_index;   // node -> graph, nondecreasing
  std::vector<int> labels;
  std::vector<std::size_t> node_offsets;  // num_graphs + 1
  std::vector<std::size_t> edge_offsets;  // num_graphs + 1

  std::size_t num_graphs() const noexcept { return labels.size(); }
  std::size_t num_nodes() const noexcept { return graph_index.size(); }
  std::size_t nodes_in(std::size_t g) const noexcept { return node_offsets[g + 1] - node_offsets[g]; }
};

inline GraphBatch batch_graphs(const std::vector<const Graph*>& graphs) {
  GraphBatch b;
  const std::size_t d = graphs.empty() ? 0 : graphs.front()->feature_dim();
  std::size_t total_nodes = 0;
  for (const Graph* g : graphs) {
    if (g->feature_dim() != d && g->num_nodes > 0) {
      throw SchemaError("batch_graphs: mixed feature dimensions " + std::to_string(d) + " and " +
                        std::to_string(g->feature_dim()));
    }
    total_nodes += g->num_nodes;
  }
  b.features = Tensor::zeros(total_nodes, d);
  b.graph_index.reserve(total_nodes);
  b.node_offsets.push_back(0);
  b.edge_offsets.push_back(0);
  std::size_t offset = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = *graphs[gi];
    std::copy(g.features.values.begin(), g.features.values.end(),
              b.features.values.begin() + static_cast<std::ptrdiff_t>(offset * d));
    for (const auto& [s, t] : g.edges) b.edges.emplace_back(s + offset, t + offset);
    b.graph_index.insert(b.graph_index.end(), g.num_nodes, gi);
    b.labels.push_back(g.label);
    offset += g.num_nodes;
    b.node_offsets.push_back(offset);
    b.edge_offsets.push_back(b.edges.size());
  }
  return b;
}

inline GraphBatch batch_graphs(const std::vector<Graph>& graphs) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(graphs.size());
  for (const auto& g : graphs) ptrs.push_back(&g);
  return batch_graphs(ptrs);
}

inline GraphBatch batch_graphs(const std::vector<Graph>& store, const std::vector<std::size_t>& indices) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(indices.size());
  for (std::size_t i : indices) ptrs.push_back(&store.at(i));
  return batch_graphs(ptrs);
}

/// Inverse of batch_graphs. Edge features are not carried by batches.
inline std::vector<Graph> unbatch(const GraphBatch& b) {
  std::vector<Graph> out(b.num_graphs());
  const std::size_t d = b.features.cols();
  for (std::size_t gi = 0; gi < b.num_graphs(); ++gi) {
    Graph& g = out[gi];
    const std::size_t lo = b.node_offsets[gi], hi = b.node_offsets[gi + 1];
    g.num_nodes = hi - lo;
    g.features = Tensor::zeros(g.num_nodes, d);
    std::copy(b.features.values.begin() + static_cast<std::ptrdiff_t>(lo * d),
              b.features.values.begin() + static_cast<std::ptrdiff_t>(hi * d), g.features.values.begin());
    for (std::size_t e = b.edge_offsets[gi]; e < b.edge_offsets[gi + 1]; ++e) {
      g.edges.emplace_back(b.edges[e].first - lo, b.edges[e].second - lo);
    }
    g.label = b.labels[gi];
  }
  return out;
}

}  // namespace gduq
