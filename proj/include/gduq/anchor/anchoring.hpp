#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "gduq/anchor/summary.hpp"
#include "gduq/core/autodiff.hpp"
#include "gduq/core/checkpoint.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/core/log.hpp"
#include "gduq/core/rng.hpp"
#include "gduq/graph/graph.hpp"
#include "gduq/nn/model.hpp"

namespace gduq {

enum class AnchorVariant { input, mpnn, readout, pretrained_readout };

inline std::string to_string(AnchorVariant v) {
  switch (v) {
    case AnchorVariant::input: return "input";
    case AnchorVariant::mpnn: return "mpnn";
    case AnchorVariant::readout: return "readout";
    case AnchorVariant::pretrained_readout: return "pretrained_readout";
  }
  return "input";
}

inline AnchorVariant anchor_variant_from_string(const std::string& s) {
  if (s == "input") return AnchorVariant::input;
  if (s == "mpnn") return AnchorVariant::mpnn;
  if (s == "readout") return AnchorVariant::readout;
  if (s == "pretrained_readout") return AnchorVariant::pretrained_readout;
  throw ConfigError("unknown anchor variant '" + s + "'");
}

struct AnchorConfig {
  AnchorVariant variant = AnchorVariant::readout;
  std::size_t num_anchors = 10;  // K
  std::size_t layer = 1;         // r, mpnn variant only

  void validate(std::size_t num_mp_layers) const {
    if (num_anchors < 1) throw ConfigError("AnchorConfig: K must be at least 1");
    if (variant == AnchorVariant::mpnn && (layer < 1 || layer > num_mp_layers)) {
      throw ConfigError("AnchorConfig: layer r must lie in [1, " + std::to_string(num_mp_layers) + "]");
    }
  }

  AnchorSite site() const {
    switch (variant) {
      case AnchorVariant::input: return AnchorSite::input();
      case AnchorVariant::mpnn: return AnchorSite::hidden(layer);
      case AnchorVariant::readout:
      case AnchorVariant::pretrained_readout: return AnchorSite::readout();
    }
    return AnchorSite::none();
  }
};

/// Diagonal Gaussian over node features.
struct AnchorDistribution {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::string fitted_on = "train node features";

  std::size_t dim() const noexcept { return mean.size(); }
};

inline constexpr double kAnchorStdFloor = 1e-6;

/// Per-dimension mean and sample standard deviation (N - 1) of all node
/// feature rows, pooled over the selected graphs. Zero-variance dimensions are
/// floored at 1e-6.
inline AnchorDistribution fit_anchor_gaussian(const std::vector<Graph>& store, const std::vector<std::size_t>& indices) {
  std::size_t d = 0, n = 0;
  for (std::size_t i : indices) {
    const Graph& g = store.at(i);
    if (g.num_nodes == 0) continue;
    if (n == 0) d = g.feature_dim();
    if (g.feature_dim() != d) throw SchemaError("fit_anchor_gaussian: mixed feature dimensions");
    n += g.num_nodes;
  }
  if (n == 0) throw ContractError("fit_anchor_gaussian: need at least one graph with one node");

  AnchorDistribution dist;
  dist.mean.assign(d, 0.0);
  dist.stddev.assign(d, 0.0);
  for (std::size_t i : indices) {
    const Graph& g = store[i];
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      for (std::size_t k = 0; k < d; ++k) dist.mean[k] += g.features.at(v, k);
    }
  }
  for (double& m : dist.mean) m /= static_cast<double>(n);
  for (std::size_t i : indices) {
    const Graph& g = store[i];
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = g.features.at(v, k) - dist.mean[k];
        dist.stddev[k] += diff * diff;
      }
    }
  }
  for (std::size_t k = 0; k < d; ++k) {
    dist.stddev[k] = n > 1 ? std::sqrt(dist.stddev[k] / static_cast<double>(n - 1)) : 0.0;
    if (dist.stddev[k] < kAnchorStdFloor) {
      log::warn("fit_anchor_gaussian: feature dimension " + std::to_string(k) + " has (near) zero variance; std floored at 1e-6");
      dist.stddev[k] = kAnchorStdFloor;
    }
  }
  return dist;
}

inline AnchorDistribution fit_anchor_gaussian(const std::vector<Graph>& graphs) {
  std::vector<std::size_t> all(graphs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return fit_anchor_gaussian(graphs, all);
}

/// Training-time input anchoring: an independent anchor c_v ~ N(mean, std)
/// per node, output rows [x_v - c_v || x_v].
inline Var anchor_input_train(const Var& x, const AnchorDistribution& dist, RngStream& rng) {
  const std::size_t n = x.rows(), d = x.cols();
  if (dist.dim() != d) {
    throw ShapeError("anchor_input_train: distribution has " + std::to_string(dist.dim()) + " dims, features have " +
                     std::to_string(d));
  }
  Tensor c = Tensor::zeros(n, d);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t k = 0; k < d; ++k) c.at(v, k) = rng.normal(dist.mean[k], dist.stddev[k]);
  }
  Var anchors = x.tape().constant(std::move(c));
  return concat_cols(sub(x, anchors), x);
}

/// Shuffle anchoring over the rows of a batch: C = rows of `h` permuted by
/// `perm`, held constant for the backward pass; output [h - C || C].
inline Var anchor_rows_with_permutation(const Var& h, const std::vector<std::size_t>& perm) {
  const Tensor& hv = h.value();
  const std::size_t n = hv.rows(), d = hv.cols();
  if (perm.size() != n) throw ShapeError("anchor permutation length differs from row count");
  Tensor c = Tensor::zeros(n, d);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(hv.values.data() + perm[i] * d, d, c.values.data() + i * d);
  Var anchors = h.tape().constant(std::move(c));
  return concat_cols(sub(h, anchors), anchors);
}

namespace detail {

inline Var shuffle_anchor(const Var& h, RngStream& rng, const char* who) {
  if (h.rows() < 2) {
    log::warn(std::string(who) + ": fewer than two rows in batch, falling back to self-anchoring");
    return anchor_rows_with_permutation(h, {0});
  }
  return anchor_rows_with_permutation(h, rng.permutation(h.rows()));
}

}  // namespace detail

/// Intermediate MPNN anchoring during training: node rows shuffled across the
/// whole batch.
inline Var anchor_mpnn_train(const Var& hidden, RngStream& rng) {
  return detail::shuffle_anchor(hidden, rng, "anchor_mpnn_train");
}

/// READOUT anchoring during training: graph representations shuffled within the batch.
inline Var anchor_readout_train(const Var& graph_reps, RngStream& rng) {
  return detail::shuffle_anchor(graph_reps, rng, "anchor_readout_train");
}

/// Self-anchoring (C = X), output [X - X || X]. The anchor is the query
/// itself, so it stays on the tape and the gradient is exact.
inline Var self_anchor(const Var& h) { return concat_cols(sub(h, h), h); }

/// Anchorer used while training an anchored model. `rng` must outlive it.
inline Anchorer make_train_anchorer(const AnchorConfig& cfg, const AnchorDistribution* dist, RngStream& rng) {
  switch (cfg.variant) {
    case AnchorVariant::input:
      if (!dist) throw ContractError("input anchoring needs a fitted anchor distribution");
      return [dist, &rng](Tape&, const Var& x, const GraphBatch&) { return anchor_input_train(x, *dist, rng); };
    case AnchorVariant::mpnn:
      return [&rng](Tape&, const Var& h, const GraphBatch&) { return anchor_mpnn_train(h, rng); };
    case AnchorVariant::readout:
    case AnchorVariant::pretrained_readout:
      return [&rng](Tape&, const Var& g, const GraphBatch&) { return anchor_readout_train(g, rng); };
  }
  throw ContractError("unknown anchor variant");
}

inline Anchorer make_self_anchorer() {
  return [](Tape&, const Var& h, const GraphBatch&) { return self_anchor(h); };
}

/// K concrete anchors frozen for an evaluation run.
struct FixedAnchorSet {
  AnchorVariant variant = AnchorVariant::readout;
  Tensor anchors;  // K x d
  std::uint64_t source_seed = 0;

  std::size_t size() const noexcept { return anchors.rows(); }
  std::size_t dim() const noexcept { return anchors.cols(); }
  std::vector<double> anchor(std::size_t k) const {
    auto r = anchors.row(k);
    return {r.begin(), r.end()};
  }
};

/// Inference anchorer for one fixed anchor c, broadcast to every row:
/// input variant [x - c || x], hidden variants [h - c || c].
inline Anchorer make_fixed_anchorer(AnchorVariant variant, std::vector<double> c) {
  auto anchor = std::make_shared<const std::vector<double>>(std::move(c));
  return [variant, anchor](Tape& tape, const Var& x, const GraphBatch&) {
    const std::size_t n = x.rows(), d = x.cols();
    if (anchor->size() != d) {
      throw ShapeError("fixed anchor has " + std::to_string(anchor->size()) + " dims, representation has " + std::to_string(d));
    }
    Tensor c = Tensor::zeros(n, d);
    for (std::size_t i = 0; i < n; ++i) std::copy(anchor->begin(), anchor->end(), c.values.begin() + static_cast<std::ptrdiff_t>(i * d));
    Var cv = tape.constant(std::move(c));
    return variant == AnchorVariant::input ? concat_cols(sub(x, cv), x) : concat_cols(sub(x, cv), cv);
  };
}

/// K anchors c_k ~ N(mean, std) for the input variant.
inline FixedAnchorSet freeze_input_anchors(const AnchorDistribution& dist, std::size_t k, RngStream rng) {
  if (k < 1) throw ContractError("freeze_anchor_set: K must be at least 1");
  FixedAnchorSet set;
  set.variant = AnchorVariant::input;
  set.source_seed = rng.seed();
  set.anchors = Tensor::zeros(k, dist.dim());
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < dist.dim(); ++j) set.anchors.at(i, j) = rng.normal(dist.mean[j], dist.stddev[j]);
  }
  return set;
}

/// K hidden rows drawn from deterministic forward passes over validation
/// graphs: node rows after layer r (mpnn) or graph representations (readout).
inline FixedAnchorSet freeze_hidden_anchors(GnnModel& model, AnchorVariant variant, const std::vector<Graph>& store,
                                            const std::vector<std::size_t>& val_idx, std::size_t k, RngStream rng) {
  if (k < 1) throw ContractError("freeze_anchor_set: K must be at least 1");
  if (val_idx.empty()) throw ContractError("freeze_anchor_set: empty validation source");
  if (variant == AnchorVariant::input) throw ContractError("freeze_hidden_anchors: input variant draws from a distribution");
  const Tensor rows = model.site_activations(batch_graphs(store, val_idx));
  FixedAnchorSet set;
  set.variant = variant;
  set.source_seed = rng.seed();
  set.anchors = Tensor::zeros(k, rows.cols());
  std::vector<std::size_t> picks;
  if (k <= rows.rows()) {
    picks = rng.permutation(rows.rows());
    picks.resize(k);
  } else {
    log::info("freeze_anchor_set: K=" + std::to_string(k) + " exceeds " + std::to_string(rows.rows()) +
              " available rows; sampling with replacement");
    for (std::size_t i = 0; i < k; ++i) picks.push_back(rng.uniform_index(rows.rows()));
  }
  for (std::size_t i = 0; i < k; ++i) {
    std::copy_n(rows.values.data() + picks[i] * rows.cols(), rows.cols(), set.anchors.values.data() + i * rows.cols());
  }
  return set;
}

/// Dispatches on the variant: the distribution for input anchoring,
/// validation-set hidden rows otherwise.
inline FixedAnchorSet freeze_anchor_set(const AnchorConfig& cfg, GnnModel& model, const AnchorDistribution* dist,
                                        const std::vector<Graph>& store, const std::vector<std::size_t>& val_idx,
                                        RngStream rng) {
  if (cfg.variant == AnchorVariant::input) {
    if (!dist) throw ContractError("freeze_anchor_set: input variant needs a fitted distribution");
    return freeze_input_anchors(*dist, cfg.num_anchors, rng);
  }
  return freeze_hidden_anchors(model, cfg.variant, store, val_idx, cfg.num_anchors, rng);
}

/// Runs one eval-mode forward per anchor over the selected graphs and
/// summarizes the K softmax rows of each graph.
inline std::vector<PredictionSummary> infer_with_anchors(GnnModel& model, const FixedAnchorSet& set,
                                                         const std::vector<Graph>& store,
                                                         const std::vector<std::size_t>& indices,
                                                         ConfidenceSource source = ConfidenceSource::calibrated) {
  const std::size_t k = set.size();
  if (k == 0) throw ContractError("infer_with_anchors: empty anchor set");
  if (k == 1) log::info("infer_with_anchors: K=1, standard deviation defined as 0");
  const std::size_t c = model.config().num_classes;
  std::vector<Tensor> per_graph(indices.size(), Tensor::zeros(k, c));
  for (std::size_t a = 0; a < k; ++a) {
    const Anchorer anchorer = make_fixed_anchorer(set.variant, set.anchor(a));
    ForwardContext ctx;
    ctx.anchorer = &anchorer;
    const Tensor probs = softmax_rows(predict_logits(model, store, indices, ctx));
    for (std::size_t i = 0; i < indices.size(); ++i) {
      std::copy_n(probs.values.data() + i * c, c, per_graph[i].values.data() + a * c);
    }
  }
  std::vector<PredictionSummary> out;
  out.reserve(indices.size());
  for (auto& t : per_graph) out.push_back(summarize_samples(std::move(t), source));
  return out;
}

inline PredictionSummary infer_with_anchors(GnnModel& model, const FixedAnchorSet& set, const Graph& graph,
                                            ConfidenceSource source = ConfidenceSource::calibrated) {
  std::vector<Graph> one{graph};
  return infer_with_anchors(model, set, one, {0}, source).front();
}

/// Pretrained READOUT anchoring: keeps the trained MPNN layers frozen and
/// replaces the MLP head with a freshly initialized one whose input takes
/// [G - G_c || G_c].
inline GnnModel convert_pretrained(const GnnModel& vanilla, RngStream& rng) {
  if (vanilla.site().kind != AnchorSite::Kind::none) throw ContractError("convert_pretrained expects a non-anchored model");
  GnnModel fresh(vanilla.config(), AnchorSite::readout(), rng);
  ParamSet params;
  for (const auto& p : fresh.params()) {
    if (p.name.rfind("mp", 0) == 0) {
      params.add(p.name, vanilla.params().at(p.name).value, false);
    } else {
      params.add(p.name, p.value, true);
    }
  }
  for (auto& p : params) p.value.grad.reset();
  return GnnModel(vanilla.config(), AnchorSite::readout(), std::move(params));
}

// Anchor-set file (JSON):
//   {"format": "gduq-anchors", "version": 1, "variant": str, "K": int, "dim": int,
//    "anchors": [[float...] x K], "source_seed": uint}

inline nlohmann::json anchor_set_to_json(const FixedAnchorSet& set) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < set.size(); ++k) rows.push_back(set.anchor(k));
  return {{"format", "gduq-anchors"}, {"version", 1},         {"variant", to_string(set.variant)},
          {"K", set.size()},          {"dim", set.dim()},     {"anchors", rows},
          {"source_seed", set.source_seed}};
}

inline FixedAnchorSet anchor_set_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "gduq-anchors" || j.value("version", 0) != 1) throw SchemaError("not a gduq-anchors v1 file");
  FixedAnchorSet set;
  set.variant = anchor_variant_from_string(j.at("variant").get<std::string>());
  set.source_seed = j.at("source_seed").get<std::uint64_t>();
  const auto k = j.at("K").get<std::size_t>();
  const auto d = j.at("dim").get<std::size_t>();
  const auto rows = j.at("anchors").get<std::vector<std::vector<double>>>();
  if (rows.size() != k) throw SchemaError("anchor file: K does not match the number of rows");
  set.anchors = k ? Tensor::from_rows(rows) : Tensor::zeros(0, d);
  if (set.anchors.cols() != d) throw SchemaError("anchor file: row width does not match dim");
  return set;
}

inline void save_anchor_set(const FixedAnchorSet& set, const std::filesystem::path& path) {
  write_file_atomic(path, anchor_set_to_json(set).dump());
}

inline FixedAnchorSet load_anchor_set(const std::filesystem::path& path) {
  try {
    return anchor_set_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace gduq
