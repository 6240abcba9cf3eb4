#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include "gduq/core/autodiff.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/core/parameter.hpp"

namespace gduq {

/// Builds a scalar loss on the given tape from the current parameter values.
using LossFn = std::function<Var(Tape&)>;

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  /// Entries where the one-sided differences disagree (a kink inside +-h).
  std::size_t skipped_nonsmooth = 0;
};

/// Compares tape gradients with central differences for every scalar entry of
/// every trainable parameter.
///
/// rel = |analytic - cd| / (|analytic| + |cd| + 1e-12). An entry is excluded
/// when the forward and backward one-sided slopes differ by more than
/// `kink_tolerance` relative to their scale and by more than curvature alone
/// explains: a ReLU kink inside the probe interval, where no derivative exists.
inline GradcheckResult gradcheck(const LossFn& f, ParamSet& params, double h = 1e-5, double kink_tolerance = 1e-3) {
  if (h < 1e-7 || h > 1e-3) throw ContractError("gradcheck: step must lie in [1e-7, 1e-3]");

  auto evaluate = [&]() {
    Tape tape;
    return f(tape).value().values.at(0);
  };

  for (auto& p : params) p.value.grad.reset();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }

  const double f0 = evaluate();
  GradcheckResult result;
  for (auto& p : params) {
    if (!p.trainable) continue;
    const std::vector<double> analytic = p.value.grad ? *p.value.grad : std::vector<double>(p.value.size(), 0.0);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value.values[k];
      p.value.values[k] = orig + h;
      const double fp = evaluate();
      p.value.values[k] = orig - h;
      const double fm = evaluate();
      p.value.values[k] = orig;

      const double fwd = (fp - f0) / h;
      const double bwd = (f0 - fm) / h;
      const double slope_scale = std::abs(fwd) + std::abs(bwd) + 1e-6;
      // Smooth points give |fwd - bwd| ~ h * |f''|; a kink gives a jump that does not shrink with h.
      if (std::abs(fwd - bwd) > std::max(kink_tolerance * slope_scale, 50.0 * h)) {
        ++result.skipped_nonsmooth;
        continue;
      }
      const double cd = (fp - fm) / (2.0 * h);
      const double rel = std::abs(analytic[k] - cd) / (std::abs(analytic[k]) + std::abs(cd) + 1e-12);
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = k;
      }
    }
  }
  return result;
}

}  // namespace gduq
