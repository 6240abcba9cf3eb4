#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "gduq/anchor/summary.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/core/rng.hpp"
#include "gduq/nn/model.hpp"

namespace gduq {

struct McdSpec {
  std::optional<double> dropout_rate;  // defaults to the model's training rate
  std::size_t samples = 10;            // S
  std::vector<bool> site_mask;         // empty: every dropout site active
};

/// S forwards with dropout active; mean and sample std summarized as for
/// anchors. Class and confidence come from the mean (no modulation).
inline std::vector<PredictionSummary> mcd_predict(GnnModel& model, const std::vector<Graph>& store,
                                                  const std::vector<std::size_t>& indices, const McdSpec& spec,
                                                  RngStream rng) {
  const double p = spec.dropout_rate.value_or(model.config().dropout_rate);
  if (!(p > 0.0 && p < 1.0)) throw ContractError("mcd_predict: dropout rate must lie in (0, 1) for MC dropout");
  if (spec.samples < 1) throw ContractError("mcd_predict: need at least one sample");
  const std::size_t c = model.config().num_classes;
  std::vector<Tensor> per_graph(indices.size(), Tensor::zeros(spec.samples, c));
  ForwardContext ctx;
  ctx.mode = Mode::train;
  ctx.rng = &rng;
  ctx.dropout_mask = spec.site_mask;
  ctx.dropout_rate = p;
  for (std::size_t s = 0; s < spec.samples; ++s) {
    const Tensor probs = softmax_rows(predict_logits(model, store, indices, ctx));
    for (std::size_t i = 0; i < indices.size(); ++i) {
      std::copy_n(probs.values.data() + i * c, c, per_graph[i].values.data() + s * c);
    }
  }
  std::vector<PredictionSummary> out;
  out.reserve(indices.size());
  for (auto& t : per_graph) out.push_back(summarize_samples(std::move(t), ConfidenceSource::mean));
  return out;
}

inline PredictionSummary mcd_predict(GnnModel& model, const Graph& graph, const McdSpec& spec, RngStream rng) {
  std::vector<Graph> one{graph};
  return mcd_predict(model, one, {0}, spec, rng).front();
}

}  // namespace gduq
