#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gduq/core/errors.hpp"
#include "gduq/core/rng.hpp"
#include "gduq/core/tensor.hpp"

namespace gduq {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Named, ordered parameter collection. Order is insertion order and is what
/// the optimizer and checkpoint format iterate over.
class ParamSet {
 public:
  Parameter& add(std::string name, Tensor value, bool trainable = true) {
    if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
    params_.push_back(Parameter{std::move(name), std::move(value), trainable});
    return params_.back();
  }

  Parameter* find(const std::string& name) noexcept {
    auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
    return it == params_.end() ? nullptr : &*it;
  }

  const Parameter* find(const std::string& name) const noexcept {
    auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
    return it == params_.end() ? nullptr : &*it;
  }

  Parameter& at(const std::string& name) {
    Parameter* p = find(name);
    if (!p) throw ShapeError("missing parameter '" + name + "'");
    return *p;
  }

  const Parameter& at(const std::string& name) const {
    const Parameter* p = find(name);
    if (!p) throw ShapeError("missing parameter '" + name + "'");
    return *p;
  }

  void erase_prefix(const std::string& prefix) {
    std::erase_if(params_, [&](const Parameter& p) { return p.name.rfind(prefix, 0) == 0; });
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  std::size_t size() const noexcept { return params_.size(); }
  bool empty() const noexcept { return params_.empty(); }

  std::size_t scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  Parameter& operator[](std::size_t i) noexcept { return params_[i]; }
  const Parameter& operator[](std::size_t i) const noexcept { return params_[i]; }

 private:
  std::vector<Parameter> params_;
};

/// Glorot-uniform weight matrix.
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w = Tensor::zeros(fan_in, fan_out);
  for (double& v : w.values) v = rng.uniform(-limit, limit);
  return w;
}

}  // namespace gduq
