#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gduq/core/adam.hpp"
#include "gduq/core/autodiff.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/core/rng.hpp"
#include "gduq/graph/graph.hpp"
#include "gduq/nn/model.hpp"

namespace gduq {

struct TrainOptions {
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
};

struct TrainStats {
  std::vector<double> epoch_loss;
  bool diverged = false;
  std::string diagnostic;
};

/// Mini-batch Adam on mean cross-entropy. Batch order and dropout draw from
/// independent children of `rng`; the anchorer, if any, owns its own stream.
/// Stops early and reports divergence on a non-finite loss or gradient.
inline TrainStats train_model(GnnModel& model, const std::vector<Graph>& store, const std::vector<std::size_t>& train_idx,
                              const TrainOptions& opts, RngStream rng, const Anchorer* anchorer = nullptr,
                              OptimizerState* state = nullptr) {
  if (train_idx.empty()) throw ContractError("train_model: empty training set");
  if (opts.batch_size == 0) throw ConfigError("train_model: batch_size must be positive");
  OptimizerState local(AdamHyper{opts.learning_rate});
  OptimizerState& opt = state ? *state : local;

  RngStream order_rng = rng.split(1);
  RngStream dropout_rng = rng.split(2);
  ForwardContext ctx;
  ctx.mode = Mode::train;
  ctx.rng = &dropout_rng;
  ctx.anchorer = anchorer;

  TrainStats stats;
  std::vector<std::size_t> order = train_idx;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opts.batch_size);
      std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
      GraphBatch batch = batch_graphs(store, chunk);
      Tape tape;
      Var logits = model.forward(tape, batch, ctx);
      auto ce = softmax_cross_entropy(logits, batch.labels);
      const double loss = ce.loss.value().values[0];
      if (!std::isfinite(loss)) {
        stats.diverged = true;
        stats.diagnostic = "non-finite loss at epoch " + std::to_string(epoch);
        return stats;
      }
      model.params().zero_grad();
      tape.backward(ce.loss);
      try {
        adam_step(model.params(), opt);
      } catch (const NumericError& e) {
        stats.diverged = true;
        stats.diagnostic = e.what();
        return stats;
      }
      total += loss * static_cast<double>(chunk.size());
    }
    stats.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  return stats;
}

struct TrainedModel {
  GnnModel model;
  TrainStats stats;
};

/// Seeded recipe shared by every method: parameters from stream 0 of
/// `seed`, batch order and dropout from stream 1.
inline TrainedModel train_from_seed(const GnnConfig& config, AnchorSite site, const std::vector<Graph>& store,
                                    const std::vector<std::size_t>& train_idx, const TrainOptions& opts,
                                    std::uint64_t seed, const Anchorer* anchorer = nullptr) {
  RngStream root(seed);
  RngStream init = root.split(0);
  TrainedModel out{GnnModel(config, site, init), {}};
  out.stats = train_model(out.model, store, train_idx, opts, root.split(1), anchorer);
  return out;
}

}  // namespace gduq
