#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "gduq/core/errors.hpp"
#include "gduq/metrics/records.hpp"

namespace gduq {

inline double accuracy(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ContractError("accuracy: no records");
  std::size_t hits = 0;
  for (const auto& r : records) hits += r.correct() ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

/// Uniform confidence bins over [0, 1]. Bin b covers [b/B, (b+1)/B); the last
/// bin also takes confidence 1.
struct CalibrationBins {
  std::size_t num_bins = 10;
  std::vector<std::size_t> count;
  std::vector<double> mean_confidence;
  std::vector<double> mean_accuracy;

  static std::size_t bin_of(double confidence, std::size_t num_bins) {
    const auto b = static_cast<std::size_t>(std::floor(confidence * static_cast<double>(num_bins)));
    return std::min(b, num_bins - 1);
  }
};

inline CalibrationBins calibration_bins(const std::vector<EvalRecord>& records, std::size_t num_bins = 10) {
  if (records.empty()) throw ContractError("ece: no records");
  if (num_bins == 0) throw ContractError("ece: need at least one bin");
  CalibrationBins bins;
  bins.num_bins = num_bins;
  bins.count.assign(num_bins, 0);
  bins.mean_confidence.assign(num_bins, 0.0);
  bins.mean_accuracy.assign(num_bins, 0.0);
  for (const auto& r : records) {
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
      throw ContractError("ece: confidence " + std::to_string(r.confidence) + " outside [0, 1]");
    }
    const std::size_t b = CalibrationBins::bin_of(r.confidence, num_bins);
    ++bins.count[b];
    bins.mean_confidence[b] += r.confidence;
    bins.mean_accuracy[b] += r.correct() ? 1.0 : 0.0;
  }
  for (std::size_t b = 0; b < num_bins; ++b) {
    if (bins.count[b] == 0) continue;
    bins.mean_confidence[b] /= static_cast<double>(bins.count[b]);
    bins.mean_accuracy[b] /= static_cast<double>(bins.count[b]);
  }
  return bins;
}

/// Top-1 expected calibration error: sum_b (n_b / N) |acc_b - conf_b|.
inline double ece(const std::vector<EvalRecord>& records, std::size_t num_bins = 10) {
  const CalibrationBins bins = calibration_bins(records, num_bins);
  double total = 0.0;
  for (std::size_t b = 0; b < num_bins; ++b) {
    if (bins.count[b] == 0) continue;
    total += static_cast<double>(bins.count[b]) * std::abs(bins.mean_accuracy[b] - bins.mean_confidence[b]);
  }
  return total / static_cast<double>(records.size());
}

/// P(score_id > score_ood) + 0.5 P(tie), in-distribution as the positive
/// class; computed from mid-ranks in O(n log n).
inline double auroc(const std::vector<double>& scores_id, const std::vector<double>& scores_ood) {
  if (scores_id.empty() || scores_ood.empty()) throw ContractError("auroc: both score lists must be nonempty");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(scores_id.size() + scores_ood.size());
  for (double s : scores_id) items.push_back({s, true});
  for (double s : scores_ood) items.push_back({s, false});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Twice the mid-ranks are integers, so U is counted exactly in half units.
  std::uint64_t rank_sum_x2 = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const std::uint64_t mid_rank_x2 = i + 1 + j;  // 2 * average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (items[k].positive) rank_sum_x2 += mid_rank_x2;
    }
    i = j;
  }
  const std::uint64_t n_pos = scores_id.size(), n_neg = scores_ood.size();
  const std::uint64_t u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(u_x2) / static_cast<double>(2 * n_pos * n_neg);
}

/// Fraction of records with confidence strictly above tau.
inline double coverage(const std::vector<EvalRecord>& records, double tau) {
  if (records.empty()) return 0.0;
  std::size_t above = 0;
  for (const auto& r : records) above += r.confidence > tau ? 1 : 0;
  return static_cast<double>(above) / static_cast<double>(records.size());
}

struct GepThreshold {
  double tau = 0.0;
  double val_accuracy = 0.0;
  double val_error = 0.0;  // |acc_val - coverage_val(tau)|
};

/// tau minimizing |acc_val - coverage(tau)| over the distinct validation
/// confidences plus {0, 1}; ties go to the smaller tau.
inline GepThreshold fit_gep_threshold(const std::vector<EvalRecord>& val_records) {
  if (val_records.empty()) throw ContractError("fit_gep_threshold: no validation records");
  const double acc = accuracy(val_records);
  std::vector<double> conf = confidences(val_records);
  std::sort(conf.begin(), conf.end());
  std::vector<double> candidates{0.0};
  for (double c : conf) {
    if (c > 0.0 && c < 1.0) candidates.push_back(c);
  }
  candidates.push_back(1.0);
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  // Sweep ascending; coverage(tau) = (#conf > tau) / n via upper_bound.
  GepThreshold best;
  best.val_accuracy = acc;
  best.val_error = 2.0;
  const auto n = static_cast<double>(conf.size());
  for (double tau : candidates) {
    const auto above = static_cast<double>(conf.end() - std::upper_bound(conf.begin(), conf.end(), tau));
    const double err = std::abs(acc - above / n);
    if (err < best.val_error) {
      best.val_error = err;
      best.tau = tau;
    }
  }
  return best;
}

/// |acc_target - coverage(tau)| on target records.
inline double gep_error(const std::vector<EvalRecord>& records, double acc_target, double tau) {
  return std::abs(acc_target - coverage(records, tau));
}

}  // namespace gduq
