#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gduq/core/autodiff.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/core/parameter.hpp"
#include "gduq/core/rng.hpp"
#include "gduq/graph/graph.hpp"
#include "gduq/nn/layers.hpp"

namespace gduq {

enum class Backbone { gcn, gin };

inline std::string to_string(Backbone b) { return b == Backbone::gcn ? "gcn" : "gin"; }

inline Backbone backbone_from_string(const std::string& s) {
  if (s == "gcn") return Backbone::gcn;
  if (s == "gin") return Backbone::gin;
  throw ConfigError("unknown backbone '" + s + "'");
}

inline std::string to_string(ReadoutKind r) { return r == ReadoutKind::mean ? "mean" : "sum"; }

inline ReadoutKind readout_from_string(const std::string& s) {
  if (s == "mean") return ReadoutKind::mean;
  if (s == "sum") return ReadoutKind::sum;
  throw ConfigError("unknown readout '" + s + "'");
}

struct GnnConfig {
  Backbone backbone = Backbone::gin;
  std::size_t num_mp_layers = 3;
  std::size_t hidden_dim = 64;
  ReadoutKind readout = ReadoutKind::mean;
  std::size_t mlp_depth = 2;
  double gin_epsilon = 0.0;
  double dropout_rate = 0.0;
  std::size_t in_dim = 0;
  std::size_t num_classes = 2;

  void validate() const {
    if (num_mp_layers < 1) throw ConfigError("GnnConfig: need at least one message passing layer");
    if (hidden_dim < 1) throw ConfigError("GnnConfig: hidden_dim must be positive");
    if (mlp_depth < 1) throw ConfigError("GnnConfig: mlp_depth must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("GnnConfig: dropout_rate must lie in [0, 1)");
    if (in_dim < 1) throw ConfigError("GnnConfig: in_dim must be positive");
    if (num_classes < 2) throw ConfigError("GnnConfig: need at least two classes");
  }

  /// Dropout sites: one after every MPNN layer, one after every hidden head layer.
  std::size_t dropout_sites() const noexcept { return num_mp_layers + mlp_depth - 1; }
};

/// Where an anchored model doubles its input width.
struct AnchorSite {
  enum class Kind { none, input, hidden, readout };
  Kind kind = Kind::none;
  std::size_t layer = 0;  // hidden: anchoring after this many MPNN layers (1-based)

  static AnchorSite none() { return {}; }
  static AnchorSite input() { return {Kind::input, 0}; }
  static AnchorSite hidden(std::size_t r) { return {Kind::hidden, r}; }
  static AnchorSite readout() { return {Kind::readout, 0}; }

  bool operator==(const AnchorSite&) const = default;
};

enum class Mode { train, eval };

/// Maps the representation at the anchor site to its anchored, width-doubled form.
using Anchorer = std::function<Var(Tape&, const Var& site_value, const GraphBatch& batch)>;

struct ForwardContext {
  Mode mode = Mode::eval;
  RngStream* rng = nullptr;          // dropout randomness, required when dropout is active
  const Anchorer* anchorer = nullptr;
  std::vector<bool> dropout_mask;    // per dropout site; empty means all sites enabled
  std::optional<double> dropout_rate;  // overrides the configured rate when set
};

/// Graph classifier: MPNN stack, permutation-invariant readout, MLP head.
class GnnModel {
 public:
  GnnModel() = default;

  GnnModel(GnnConfig config, AnchorSite site, RngStream& init_rng) : config_(config), site_(site) {
    config_.validate();
    check_site();
    for (const auto& spec : expected_shapes()) {
      if (spec.is_bias) {
        params_.add(spec.name, Tensor::zeros(1, spec.cols));
      } else {
        params_.add(spec.name, glorot_uniform(spec.rows, spec.cols, init_rng));
      }
    }
  }

  GnnModel(GnnConfig config, AnchorSite site, ParamSet params) : config_(config), site_(site), params_(std::move(params)) {
    config_.validate();
    check_site();
    check_params();
  }

  const GnnConfig& config() const noexcept { return config_; }
  const AnchorSite& site() const noexcept { return site_; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }

  std::size_t mp_input_dim(std::size_t layer) const noexcept {
    if (layer == 0) return config_.in_dim * (site_.kind == AnchorSite::Kind::input ? 2 : 1);
    return config_.hidden_dim * (site_.kind == AnchorSite::Kind::hidden && site_.layer == layer ? 2 : 1);
  }

  std::size_t head_input_dim() const noexcept {
    const bool widened = site_.kind == AnchorSite::Kind::readout ||
                         (site_.kind == AnchorSite::Kind::hidden && site_.layer == config_.num_mp_layers);
    return config_.hidden_dim * (widened ? 2 : 1);
  }

  /// Throws ShapeError naming the first parameter that disagrees with the config.
  void check_params() const {
    for (const auto& spec : expected_shapes()) {
      const Parameter* p = params_.find(spec.name);
      if (!p) throw ShapeError("model parameters missing layer '" + spec.name + "'");
      if (p->value.rows() != spec.rows || p->value.cols() != spec.cols) {
        throw ShapeError("layer '" + spec.name + "' has shape " + shape_string(p->value.shape) + ", config expects " +
                         shape_string({spec.rows, spec.cols}));
      }
      if (!p->value.all_finite()) throw NumericError("layer '" + spec.name + "' holds non-finite values");
    }
    if (params_.size() != expected_shapes().size()) throw ShapeError("model parameters contain unexpected entries");
  }

  Var forward(Tape& tape, const GraphBatch& batch, const ForwardContext& ctx) { return run(tape, batch, ctx, false); }

  /// Eval-mode representation at the anchor site, before anchoring: raw node
  /// features (input), node rows after r layers (hidden), or graph rows (readout).
  Tensor site_activations(const GraphBatch& batch) {
    if (site_.kind == AnchorSite::Kind::none) throw ContractError("site_activations: model has no anchor site");
    Tape tape;
    ForwardContext ctx;
    return run(tape, batch, ctx, true).value();
  }

  /// Zeroes every weight and bias in the head and trunk.
  void zero_parameters() {
    for (auto& p : params_) std::fill(p.value.values.begin(), p.value.values.end(), 0.0);
  }

 private:
  struct ShapeSpec {
    std::string name;
    std::size_t rows;
    std::size_t cols;
    bool is_bias;
  };

  void check_site() const {
    if (site_.kind == AnchorSite::Kind::hidden && (site_.layer < 1 || site_.layer > config_.num_mp_layers)) {
      throw ConfigError("hidden anchoring layer must lie in [1, " + std::to_string(config_.num_mp_layers) + "]");
    }
  }

  std::vector<ShapeSpec> expected_shapes() const {
    std::vector<ShapeSpec> out;
    const std::size_t h = config_.hidden_dim;
    for (std::size_t l = 0; l < config_.num_mp_layers; ++l) {
      const std::string p = "mp" + std::to_string(l) + ".";
      if (config_.backbone == Backbone::gcn) {
        out.push_back({p + "weight", mp_input_dim(l), h, false});
        out.push_back({p + "bias", 1, h, true});
      } else {
        out.push_back({p + "lin1.weight", mp_input_dim(l), h, false});
        out.push_back({p + "lin1.bias", 1, h, true});
        out.push_back({p + "lin2.weight", h, h, false});
        out.push_back({p + "lin2.bias", 1, h, true});
      }
    }
    std::size_t in = head_input_dim();
    for (std::size_t k = 0; k < config_.mlp_depth; ++k) {
      const std::size_t out_dim = k + 1 == config_.mlp_depth ? config_.num_classes : h;
      const std::string p = "head" + std::to_string(k) + ".";
      out.push_back({p + "weight", in, out_dim, false});
      out.push_back({p + "bias", 1, out_dim, true});
      in = out_dim;
    }
    return out;
  }

  Var param(Tape& tape, const std::string& name) { return tape.parameter(params_.at(name)); }

  Var maybe_dropout(const Var& x, std::size_t site, const ForwardContext& ctx) {
    const double rate = ctx.dropout_rate.value_or(config_.dropout_rate);
    if (ctx.mode != Mode::train || rate == 0.0) return x;
    if (!ctx.dropout_mask.empty() && (site >= ctx.dropout_mask.size() || !ctx.dropout_mask[site])) return x;
    if (!ctx.rng) throw ContractError("forward: train-mode dropout needs an rng");
    return dropout(x, rate, *ctx.rng);
  }

  Var anchor(Tape& tape, const Var& x, const GraphBatch& batch, const ForwardContext& ctx) {
    if (!ctx.anchorer || !*ctx.anchorer) throw ContractError("forward: anchored model called without an anchorer");
    Var out = (*ctx.anchorer)(tape, x, batch);
    if (out.cols() != 2 * x.cols() || out.rows() != x.rows()) {
      throw ShapeError("anchorer returned " + shape_string({out.rows(), out.cols()}) + " for input " +
                       shape_string({x.rows(), x.cols()}));
    }
    return out;
  }

  Var run(Tape& tape, const GraphBatch& batch, const ForwardContext& ctx, bool stop_at_site) {
    if (batch.features.cols() != config_.in_dim && batch.num_nodes() > 0) {
      throw ShapeError("batch feature dim " + std::to_string(batch.features.cols()) + " differs from model in_dim " +
                       std::to_string(config_.in_dim));
    }
    const std::size_t n = batch.num_nodes();
    Var x = tape.constant(batch.features);
    if (site_.kind == AnchorSite::Kind::input) {
      if (stop_at_site) return x;
      x = anchor(tape, x, batch, ctx);
    }

    const auto prop = config_.backbone == Backbone::gcn ? gcn_normalized_adjacency(n, batch.edges)
                                                        : gin_aggregation(n, batch.edges, config_.gin_epsilon);
    for (std::size_t l = 0; l < config_.num_mp_layers; ++l) {
      const std::string p = "mp" + std::to_string(l) + ".";
      if (config_.backbone == Backbone::gcn) {
        x = gcn_layer(x, prop, param(tape, p + "weight"), param(tape, p + "bias"));
      } else {
        x = relu(gin_layer(x, prop, param(tape, p + "lin1.weight"), param(tape, p + "lin1.bias"),
                           param(tape, p + "lin2.weight"), param(tape, p + "lin2.bias")));
      }
      x = maybe_dropout(x, l, ctx);
      if (site_.kind == AnchorSite::Kind::hidden && site_.layer == l + 1) {
        if (stop_at_site) return x;
        x = anchor(tape, x, batch, ctx);
      }
    }

    Var g = readout(x, batch.graph_index, batch.num_graphs(), config_.readout);
    if (site_.kind == AnchorSite::Kind::readout) {
      if (stop_at_site) return g;
      g = anchor(tape, g, batch, ctx);
    }
    for (std::size_t k = 0; k < config_.mlp_depth; ++k) {
      const std::string p = "head" + std::to_string(k) + ".";
      g = linear(g, param(tape, p + "weight"), param(tape, p + "bias"));
      if (k + 1 < config_.mlp_depth) {
        g = relu(g);
        g = maybe_dropout(g, config_.num_mp_layers + k, ctx);
      }
    }
    return g;
  }

  GnnConfig config_;
  AnchorSite site_;
  ParamSet params_;
};

/// Logits for the selected graphs, evaluated in chunks of `batch_size`.
inline Tensor predict_logits(GnnModel& model, const std::vector<Graph>& store, const std::vector<std::size_t>& indices,
                             const ForwardContext& ctx, std::size_t batch_size = 256) {
  const std::size_t c = model.config().num_classes;
  Tensor out = Tensor::zeros(indices.size(), c);
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t stop = std::min(indices.size(), start + batch_size);
    std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                   indices.begin() + static_cast<std::ptrdiff_t>(stop));
    GraphBatch batch = batch_graphs(store, chunk);
    Tape tape;
    const Tensor& logits = model.forward(tape, batch, ctx).value();
    std::copy(logits.values.begin(), logits.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(start * c));
  }
  return out;
}

}  // namespace gduq
