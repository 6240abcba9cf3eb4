#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "gduq/core/errors.hpp"
#include "gduq/core/tensor.hpp"

namespace gduq {

/// Aggregate of K stochastic predictions for one graph.
struct PredictionSummary {
  Tensor samples;                   // K x c probability rows
  std::vector<double> mean;         // mu
  std::vector<double> stddev;       // sigma, sample std with K - 1 denominator
  std::vector<double> calibrated;   // mu * (1 - sigma), not renormalized
  int predicted = 0;
  double confidence = 0.0;
};

/// Which scores decide the predicted class and its confidence.
enum class ConfidenceSource { calibrated, mean };

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// mu = mean of rows, sigma = per-class sample std (0 when K = 1),
/// mu_calib = mu (1 - sigma).
inline PredictionSummary summarize_samples(Tensor samples, ConfidenceSource source = ConfidenceSource::calibrated) {
  const std::size_t k = samples.rows(), c = samples.cols();
  if (k == 0 || c == 0) throw ContractError("summarize_samples: need at least one sample row");
  PredictionSummary s;
  s.mean.assign(c, 0.0);
  s.stddev.assign(c, 0.0);
  s.calibrated.assign(c, 0.0);
  // Running mean: identical rows reproduce the row bitwise.
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < c; ++j) s.mean[j] += (samples.at(i, j) - s.mean[j]) / static_cast<double>(i + 1);
  }
  if (k > 1) {
    for (std::size_t j = 0; j < c; ++j) {
      double ss = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const double d = samples.at(i, j) - s.mean[j];
        ss += d * d;
      }
      s.stddev[j] = std::sqrt(ss / static_cast<double>(k - 1));
    }
  }
  for (std::size_t j = 0; j < c; ++j) s.calibrated[j] = s.mean[j] * (1.0 - s.stddev[j]);
  const auto& scores = source == ConfidenceSource::calibrated ? s.calibrated : s.mean;
  const std::size_t best = argmax(scores);
  s.predicted = static_cast<int>(best);
  s.confidence = scores[best];
  s.samples = std::move(samples);
  return s;
}

}  // namespace gduq
