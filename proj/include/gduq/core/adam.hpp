#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "gduq/core/errors.hpp"
#include "gduq/core/parameter.hpp"

namespace gduq {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  OptimizerState() = default;
  explicit OptimizerState(AdamHyper h) : hyper(h) {}
};

/// One bias-corrected Adam update over every trainable parameter that carries
/// a gradient. Frozen parameters are skipped and never touched.
inline void adam_step(ParamSet& params, OptimizerState& state) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i].value.size(), 0.0);
      state.second_moment[i].assign(params[i].value.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    if (state.first_moment[i].size() != p.value.size()) {
      throw ShapeError("adam_step: moment buffer shape mismatch for '" + p.name + "'");
    }
    if (!p.trainable || !p.value.grad) continue;
    if (p.value.grad->size() != p.value.size()) throw ShapeError("adam_step: gradient shape mismatch for '" + p.name + "'");
    for (double g : *p.value.grad) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter '" + p.name + "'");
    }
  }

  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (!p.trainable || !p.value.grad) continue;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = *p.value.grad;
    for (std::size_t k = 0; k < g.size(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p.value.values[k] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.epsilon);
    }
  }
}

}  // namespace gduq
