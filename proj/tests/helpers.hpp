#pragma once

#include <cstddef>
#include <vector>

#include "gduq/gduq.hpp"

namespace gduq::testing {

inline Graph path_graph(std::size_t n, std::size_t d, RngStream& rng, int label = 0) {
  Graph g;
  g.num_nodes = n;
  g.features = Tensor::zeros(n, d);
  for (double& v : g.features.values) v = rng.normal();
  for (std::size_t i = 1; i < n; ++i) add_undirected_edge(g, i - 1, i);
  g.label = label;
  return g;
}

/// Random connected graph: a random tree plus `extra` random chords.
inline Graph random_graph(std::size_t n, std::size_t d, std::size_t extra, RngStream& rng, int label = 0) {
  Graph g;
  g.num_nodes = n;
  g.features = Tensor::zeros(n, d);
  for (double& v : g.features.values) v = rng.normal();
  for (std::size_t i = 1; i < n; ++i) add_undirected_edge(g, rng.uniform_index(i), i);
  for (std::size_t e = 0; e < extra && n > 2; ++e) {
    const std::size_t u = rng.uniform_index(n), v = rng.uniform_index(n);
    if (u != v) add_undirected_edge(g, u, v);
  }
  g.label = label;
  return g;
}

inline std::vector<Graph> random_graphs(std::size_t count, std::size_t d, std::size_t classes, RngStream& rng) {
  std::vector<Graph> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(random_graph(3 + rng.uniform_index(6), d, 2, rng, static_cast<int>(rng.uniform_index(classes))));
  }
  return out;
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

inline GnnConfig small_config(Backbone b, std::size_t in_dim, std::size_t classes = 3, std::size_t hidden = 6) {
  GnnConfig c;
  c.backbone = b;
  c.num_mp_layers = 2;
  c.hidden_dim = hidden;
  c.mlp_depth = 2;
  c.in_dim = in_dim;
  c.num_classes = classes;
  return c;
}

/// Mean cross-entropy of the model on a fixed batch, recorded on `tape`.
inline LossFn model_loss(GnnModel& model, const GraphBatch& batch, const Anchorer* anchorer = nullptr) {
  return [&model, &batch, anchorer](Tape& tape) {
    ForwardContext ctx;
    ctx.anchorer = anchorer;
    return softmax_cross_entropy(model.forward(tape, batch, ctx), batch.labels).loss;
  };
}

}  // namespace gduq::testing
