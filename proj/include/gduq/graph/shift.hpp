#pragma once

#include <vector>

#include "gduq/core/errors.hpp"
#include "gduq/graph/graph.hpp"

namespace gduq {

/// X' = scale * X + mean_shift on every node feature; structure and labels
/// are copied unchanged.
inline std::vector<Graph> gaussian_feature_shift(const std::vector<Graph>& graphs, double mean_shift, double scale) {
  if (!(scale > 0.0)) throw DomainError("gaussian_feature_shift: scale must be positive");
  std::vector<Graph> out = graphs;
  for (Graph& g : out) {
    for (double& v : g.features.values) v = scale * v + mean_shift;
  }
  return out;
}

}  // namespace gduq
