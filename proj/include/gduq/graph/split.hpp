#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "gduq/core/errors.hpp"
#include "gduq/core/rng.hpp"
#include "gduq/graph/graph.hpp"

namespace gduq {

enum class SplitKind { none, size, covariate, concept_shift };

inline std::string to_string(SplitKind k) {
  switch (k) {
    case SplitKind::none: return "none";
    case SplitKind::size: return "size";
    case SplitKind::covariate: return "covariate";
    case SplitKind::concept_shift: return "concept";
  }
  return "none";
}

inline SplitKind split_kind_from_string(const std::string& s) {
  if (s == "none") return SplitKind::none;
  if (s == "size") return SplitKind::size;
  if (s == "covariate") return SplitKind::covariate;
  if (s == "concept" || s == "concept_shift") return SplitKind::concept_shift;
  throw ConfigError("unknown split kind '" + s + "'");
}

struct SplitDescriptor {
  SplitKind kind = SplitKind::none;
  std::map<std::string, double> params;
};

/// Index lists into a graph store.
struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test_id;
  std::vector<std::size_t> test_ood;
  SplitDescriptor descriptor;

  /// Throws SplitError if any index repeats across (or within) lists or
  /// falls outside the store.
  void check_disjoint(std::size_t store_size) const {
    std::vector<char> seen(store_size, 0);
    auto mark = [&](const std::vector<std::size_t>& idx, const char* name) {
      for (std::size_t i : idx) {
        if (i >= store_size) throw SplitError(std::string(name) + " index " + std::to_string(i) + " outside store");
        if (seen[i]) throw SplitError(std::string(name) + " index " + std::to_string(i) + " appears in more than one split");
        seen[i] = 1;
      }
    };
    mark(train, "train");
    mark(val, "val");
    mark(test_id, "test-id");
    mark(test_ood, "test-ood");
  }
};

/// Linear-interpolation quantile (the common "type 7" definition).
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

/// Picks round(fraction * n) members of `pool` spread evenly over the pool's
/// size order; ties in size are ordered randomly. Returns {kept, picked}.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    const std::vector<Graph>& graphs, std::vector<std::size_t> pool, double fraction, RngStream& rng) {
  rng.shuffle(pool);
  std::stable_sort(pool.begin(), pool.end(),
                   [&](std::size_t a, std::size_t b) { return graphs[a].num_nodes < graphs[b].num_nodes; });
  const auto n = pool.size();
  const auto n_pick = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<char> picked(n, 0);
  for (std::size_t i = 0; i < n_pick; ++i) {
    picked[std::min(n - 1, static_cast<std::size_t>((static_cast<double>(i) + 0.5) * static_cast<double>(n) /
                                                    static_cast<double>(n_pick)))] = 1;
  }
  std::vector<std::size_t> kept, out;
  for (std::size_t i = 0; i < n; ++i) (picked[i] ? out : kept).push_back(pool[i]);
  std::sort(kept.begin(), kept.end());
  std::sort(out.begin(), out.end());
  return {kept, out};
}

/// Size-generalization split: graphs whose node count is at most the
/// `train_quantile` size form train (+ a size-stratified validation slice);
/// graphs at or above the `eval_quantile` size form test-ood; the graphs in
/// between form test-id.
inline DatasetSplit size_quantile_split(const std::vector<Graph>& graphs, double train_quantile = 0.5,
                                        double eval_quantile = 0.9, double val_fraction = 0.1,
                                        RngStream rng = RngStream(0)) {
  if (graphs.size() < 10) throw SplitError("size_quantile_split needs at least 10 graphs, got " + std::to_string(graphs.size()));
  if (!(train_quantile > 0.0 && train_quantile < eval_quantile && eval_quantile < 1.0)) {
    throw ConfigError("size_quantile_split requires 0 < train_quantile < eval_quantile < 1");
  }
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("val_fraction must lie in [0, 1)");

  std::vector<double> sizes;
  sizes.reserve(graphs.size());
  for (const auto& g : graphs) sizes.push_back(static_cast<double>(g.num_nodes));
  const auto [mn, mx] = std::minmax_element(sizes.begin(), sizes.end());
  if (*mn == *mx) {
    throw SplitError("all graphs have " + std::to_string(static_cast<std::size_t>(*mn)) +
                     " nodes; a size split is undefined (use a synthetic dataset with varied sizes)");
  }
  const double train_cut = quantile(sizes, train_quantile);
  const double eval_cut = quantile(sizes, eval_quantile);

  DatasetSplit split;
  split.descriptor.kind = SplitKind::size;
  split.descriptor.params = {{"train_quantile", train_quantile},
                             {"eval_quantile", eval_quantile},
                             {"val_fraction", val_fraction},
                             {"train_cut", train_cut},
                             {"eval_cut", eval_cut}};
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (sizes[i] <= train_cut) {
      pool.push_back(i);
    } else if (sizes[i] >= eval_cut) {
      split.test_ood.push_back(i);
    } else {
      split.test_id.push_back(i);
    }
  }
  if (split.test_ood.empty()) throw SplitError("size split produced an empty out-of-distribution set");
  auto [train, val] = stratified_holdout(graphs, std::move(pool), val_fraction, rng);
  split.train = std::move(train);
  split.val = std::move(val);
  if (split.train.empty()) throw SplitError("size split produced an empty training set");
  return split;
}

}  // namespace gduq
