#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gduq/anchor/summary.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/core/log.hpp"
#include "gduq/core/rng.hpp"
#include "gduq/nn/model.hpp"
#include "gduq/nn/train.hpp"

namespace gduq {

struct EnsembleSpec {
  std::vector<std::uint64_t> seeds;  // one per member, M = seeds.size()
  GnnConfig config;
  bool allow_duplicate_seeds = false;  // only for degenerate-ensemble checks
  std::size_t max_retries = 3;

  std::size_t members() const noexcept { return seeds.size(); }

  void validate() const {
    if (seeds.size() < 2) throw ConfigError("deep ensemble needs at least two members");
    if (!allow_duplicate_seeds) {
      std::vector<std::uint64_t> s = seeds;
      std::sort(s.begin(), s.end());
      if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw ConfigError("deep ensemble seeds must be distinct");
    }
  }
};

/// Member m is initialized and trained from its own seed alone, so members
/// with equal seeds are bitwise identical. A member whose training diverges is
/// retrained from a derived seed.
inline std::vector<GnnModel> train_deep_ensemble(const EnsembleSpec& spec, const std::vector<Graph>& store,
                                                 const std::vector<std::size_t>& train_idx, const TrainOptions& opts) {
  spec.validate();
  std::vector<GnnModel> members;
  members.reserve(spec.members());
  for (std::size_t m = 0; m < spec.members(); ++m) {
    std::uint64_t seed = spec.seeds[m];
    for (std::size_t attempt = 0;; ++attempt) {
      TrainedModel trained = train_from_seed(spec.config, AnchorSite::none(), store, train_idx, opts, seed);
      const TrainStats& stats = trained.stats;
      if (!stats.diverged) {
        members.push_back(std::move(trained.model));
        break;
      }
      if (attempt >= spec.max_retries) {
        throw NumericError("ensemble member " + std::to_string(m) + " diverged after retries: " + stats.diagnostic);
      }
      log::warn("ensemble member " + std::to_string(m) + " diverged (" + stats.diagnostic + "); retraining with a new seed");
      seed = RngStream(seed).split(1000 + attempt).seed();
    }
  }
  return members;
}

/// Mean of member softmax outputs (with across-member std).
inline std::vector<PredictionSummary> ensemble_predict(std::vector<GnnModel>& members, const std::vector<Graph>& store,
                                                       const std::vector<std::size_t>& indices) {
  if (members.empty()) throw ContractError("ensemble_predict: no members");
  const std::size_t c = members.front().config().num_classes;
  std::vector<Tensor> per_graph(indices.size(), Tensor::zeros(members.size(), c));
  for (std::size_t m = 0; m < members.size(); ++m) {
    const Tensor probs = softmax_rows(predict_logits(members[m], store, indices, ForwardContext{}));
    for (std::size_t i = 0; i < indices.size(); ++i) {
      std::copy_n(probs.values.data() + i * c, c, per_graph[i].values.data() + m * c);
    }
  }
  std::vector<PredictionSummary> out;
  out.reserve(indices.size());
  for (auto& t : per_graph) out.push_back(summarize_samples(std::move(t), ConfidenceSource::mean));
  return out;
}

}  // namespace gduq
