#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

#include "gduq/core/autodiff.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/graph/graph.hpp"

namespace gduq {

/// D^{-1/2} (A + I) D^{-1/2}, with D the row sums of A + I. Every node has
/// its self loop, so no degree is zero.
inline std::shared_ptr<const SparseMatrix> gcn_normalized_adjacency(std::size_t num_nodes, const std::vector<Edge>& edges) {
  std::vector<double> deg(num_nodes, 1.0);
  for (const auto& [s, d] : edges) deg[d] += 1.0;
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(edges.size() + num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) entries.push_back({i, i, 1.0 / deg[i]});
  for (const auto& [s, d] : edges) entries.push_back({d, s, 1.0 / std::sqrt(deg[d] * deg[s])});
  return std::make_shared<const SparseMatrix>(SparseMatrix::from_entries(num_nodes, num_nodes, std::move(entries)));
}

/// (1 + eps) I + A: row v sums x_v scaled by (1 + eps) with its in-neighbors.
inline std::shared_ptr<const SparseMatrix> gin_aggregation(std::size_t num_nodes, const std::vector<Edge>& edges, double eps) {
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(edges.size() + num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) entries.push_back({i, i, 1.0 + eps});
  for (const auto& [s, d] : edges) entries.push_back({d, s, 1.0});
  return std::make_shared<const SparseMatrix>(SparseMatrix::from_entries(num_nodes, num_nodes, std::move(entries)));
}

enum class ReadoutKind { mean, sum };

/// n_graphs x n_nodes pooling operator for a node -> graph assignment.
inline std::shared_ptr<const SparseMatrix> pooling_matrix(const std::vector<std::size_t>& graph_index, std::size_t num_graphs,
                                                          ReadoutKind kind) {
  std::vector<std::size_t> counts(num_graphs, 0);
  for (std::size_t g : graph_index) {
    if (g >= num_graphs) throw ContractError("readout: graph index " + std::to_string(g) + " out of range");
    ++counts[g];
  }
  for (std::size_t g = 0; g < num_graphs; ++g) {
    if (counts[g] == 0) throw ContractError("readout: graph " + std::to_string(g) + " has no nodes");
  }
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(graph_index.size());
  for (std::size_t v = 0; v < graph_index.size(); ++v) {
    const std::size_t g = graph_index[v];
    entries.push_back({g, v, kind == ReadoutKind::mean ? 1.0 / static_cast<double>(counts[g]) : 1.0});
  }
  return std::make_shared<const SparseMatrix>(SparseMatrix::from_entries(num_graphs, graph_index.size(), std::move(entries)));
}

/// y = x W + b
inline Var linear(const Var& x, const Var& weight, const Var& bias) { return add_bias(matmul(x, weight), bias); }

/// ReLU(Â_norm X W + b).
inline Var gcn_layer(const Var& x, const std::shared_ptr<const SparseMatrix>& norm_adj, const Var& weight, const Var& bias) {
  return relu(add_bias(spmm(norm_adj, matmul(x, weight)), bias));
}

/// MLP((1 + eps) x_v + sum_{u in N(v)} x_u) with a two-layer MLP
/// (Linear, ReLU, Linear); `aggregation` already carries eps.
inline Var gin_layer(const Var& x, const std::shared_ptr<const SparseMatrix>& aggregation, const Var& w1, const Var& b1,
                     const Var& w2, const Var& b2) {
  return linear(relu(linear(spmm(aggregation, x), w1, b1)), w2, b2);
}

/// Per-graph mean or sum of node rows.
inline Var readout(const Var& x, const std::vector<std::size_t>& graph_index, std::size_t num_graphs, ReadoutKind kind) {
  return spmm(pooling_matrix(graph_index, num_graphs, kind), x);
}

}  // namespace gduq
