#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "gduq/core/autodiff.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/core/tensor.hpp"

namespace gduq {

struct TempScaleState {
  double temperature = 1.0;
  double nll_before = 0.0;  // validation NLL at T = 1
  double nll_after = 0.0;   // validation NLL at the fitted T
};

/// softmax(logits / T), row-wise.
inline Tensor apply_temperature(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("apply_temperature: temperature must be positive");
  Tensor scaled = logits;
  for (double& v : scaled.values) v /= temperature;
  return softmax_rows(scaled);
}

/// Mean negative log-likelihood of softmax(logits / T).
inline double temperature_nll(const Tensor& logits, std::span<const int> labels, double temperature) {
  const std::size_t n = logits.rows(), c = logits.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.values.data() + i * c;
    double mx = z[0] / temperature;
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z[j] / temperature);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] / temperature - mx);
    total += mx + std::log(s) - z[labels[i]] / temperature;
  }
  return total / static_cast<double>(n);
}

/// Golden-section search for T over (0, 100] on log T, refined until the
/// bracket is narrower than 1e-4 in T. T = 1 is kept if the search does not
/// beat it, so the fit never increases validation NLL.
inline TempScaleState fit_temperature(const Tensor& val_logits, std::span<const int> val_labels) {
  if (val_logits.rows() == 0 || val_labels.empty()) throw ConfigError("fit_temperature: empty validation set");
  if (val_labels.size() != val_logits.rows()) throw ShapeError("fit_temperature: label count differs from logit rows");
  for (int y : val_labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= val_logits.cols()) throw std::out_of_range("fit_temperature: label out of range");
  }
  auto nll = [&](double log_t) { return temperature_nll(val_logits, val_labels, std::exp(log_t)); };

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = std::log(1e-3), hi = std::log(100.0);
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = nll(x1), f2 = nll(x2);
  while (std::exp(hi) - std::exp(lo) > 1e-4) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = nll(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = nll(x2);
    }
  }
  TempScaleState state;
  state.nll_before = nll(0.0);
  const double t = std::exp(0.5 * (lo + hi));
  const double f = temperature_nll(val_logits, val_labels, t);
  if (f <= state.nll_before) {
    state.temperature = t;
    state.nll_after = f;
  } else {
    state.temperature = 1.0;
    state.nll_after = state.nll_before;
  }
  return state;
}

}  // namespace gduq
