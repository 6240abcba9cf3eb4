#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gduq/core/errors.hpp"
#include "gduq/core/parameter.hpp"
#include "gduq/core/rng.hpp"
#include "gduq/core/tensor.hpp"

namespace gduq {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) noexcept : tape_(tape), id_(id) {}

  Tape& tape() const noexcept { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Single-use reverse-mode tape.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order; backward walks it once in reverse. After `backward` the
/// tape is consumed and a new forward pass must be recorded.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, nullptr, nullptr); }

  /// Frozen (non-trainable) parameters enter as constants.
  Var parameter(Parameter& p) {
    if (!p.trainable) return constant(p.value);
    Tensor v = p.value;
    v.grad.reset();
    return push(std::move(v), true, nullptr, &p);
  }

  Var record(Tensor value, bool needs_grad, Backward backward) {
    return push(std::move(value), needs_grad, needs_grad ? std::move(backward) : Backward{}, nullptr);
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  bool needs_grad(const Var& v) const { return needs_grad(v.id()); }

  /// Gradient buffer of a node, allocated on first touch.
  std::vector<double>& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }

  bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty(); }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  void backward(const Var& loss) {
    if (&loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
    if (consumed_) throw ContractError("backward: tape already consumed; record a new forward pass");
    const Tensor& lv = value(loss.id());
    if (!lv.is_scalar()) throw ContractError("backward: loss must be scalar, got shape " + shape_string(lv.shape));
    consumed_ = true;

    if (nodes_[loss.id()].needs_grad) grad(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
    }
    for (Node& n : nodes_) {
      if (!n.param) continue;
      auto& pg = n.param->value.grad;
      if (!pg || pg->size() != n.value.size()) pg = std::vector<double>(n.value.size(), 0.0);
      if (!n.grad.empty()) {
        for (std::size_t k = 0; k < n.grad.size(); ++k) (*pg)[k] += n.grad[k];
      }
    }
    for (Node& n : nodes_) {
      n.backward = nullptr;
    }
  }

  /// Copy of a node's accumulated gradient (zeros if none reached it).
  Tensor gradient_of(const Var& v) const {
    const Node& n = nodes_.at(v.id());
    Tensor g(n.value.shape, n.grad.empty() ? std::vector<double>(n.value.size(), 0.0) : n.grad);
    return g;
  }

 private:
  struct Node {
    Tensor value;
    bool needs_grad = false;
    Backward backward;
    Parameter* param = nullptr;
    std::vector<double> grad;
  };

  Var push(Tensor value, bool needs_grad, Backward backward, Parameter* param) {
    const std::size_t id = nodes_.size();
    value.tape_id = id;
    nodes_.push_back(Node{std::move(value), needs_grad, std::move(backward), param, {}});
    return Var(this, id);
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace kernels {

/// c[n x m] += a[n x k] * b[k x m]
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

/// c[n x k] += a[n x m] * b[k x m]^T
inline void gemm_a_bt_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * m;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * m;
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += ai[j] * bp[j];
      ci[p] += s;
    }
  }
}

/// c[k x m] += a[n x k]^T * b[n x m]
inline void gemm_at_b_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c + p * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += aip * bi[j];
    }
  }
}

}  // namespace kernels

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string({a.rows(), a.cols()}) + " x " +
                     shape_string({b.rows(), b.cols()}));
  }
  Tensor out = Tensor::zeros(a.rows(), b.cols());
  kernels::gemm_acc(a.values.data(), b.values.data(), out.values.data(), a.rows(), a.cols(), b.cols());
  return out;
}

inline Var matmul(const Var& a, const Var& b) {
  Tape& t = a.tape();
  Tensor out = matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    const auto& g = tp.grad(self);
    const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
    if (tp.needs_grad(ia)) kernels::gemm_a_bt_acc(g.data(), bv.values.data(), tp.grad(ia).data(), n, m, k);
    if (tp.needs_grad(ib)) kernels::gemm_at_b_acc(av.values.data(), g.data(), tp.grad(ib).data(), n, k, m);
  });
}

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes differ, " + shape_string({a.rows(), a.cols()}) + " vs " +
                     shape_string({b.rows(), b.cols()}));
  }
}

inline void accumulate(std::vector<double>& dst, const std::vector<double>& src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

inline Tensor like(const Tensor& t, std::vector<double> values) {
  return Tensor(t.rank() == 2 ? t.shape : std::vector<std::size_t>{t.rows(), t.cols()}, std::move(values));
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tape& t = a.tape();
  std::vector<double> v = a.value().values;
  detail::accumulate(v, b.value().values);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(detail::like(a.value(), std::move(v)), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    if (tp.needs_grad(ia)) detail::accumulate(tp.grad(ia), g);
                    if (tp.needs_grad(ib)) detail::accumulate(tp.grad(ib), g);
                  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tape& t = a.tape();
  std::vector<double> v = a.value().values;
  detail::accumulate(v, b.value().values, -1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(detail::like(a.value(), std::move(v)), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    if (tp.needs_grad(ia)) detail::accumulate(tp.grad(ia), g);
                    if (tp.needs_grad(ib)) detail::accumulate(tp.grad(ib), g, -1.0);
                  });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tape& t = a.tape();
  std::vector<double> v(a.value().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value().values[i] * b.value().values[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(detail::like(a.value(), std::move(v)), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    const auto& av = tp.value(ia).values;
                    const auto& bv = tp.value(ib).values;
                    if (tp.needs_grad(ia)) {
                      auto& ga = tp.grad(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                    }
                    if (tp.needs_grad(ib)) {
                      auto& gb = tp.grad(ib);
                      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                    }
                  });
}

inline Var scale(const Var& a, double s) {
  Tape& t = a.tape();
  std::vector<double> v = a.value().values;
  for (double& x : v) x *= s;
  const std::size_t ia = a.id();
  return t.record(detail::like(a.value(), std::move(v)), t.needs_grad(a), [ia, s](Tape& tp, std::size_t self) {
    detail::accumulate(tp.grad(ia), tp.grad(self), s);
  });
}

/// x[n x m] + b[1 x m], bias broadcast over rows.
inline Var add_bias(const Var& x, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (bv.size() != xv.cols()) {
    throw ShapeError("add_bias: bias " + shape_string(bv.shape) + " vs input " + shape_string({xv.rows(), xv.cols()}));
  }
  Tape& t = x.tape();
  const std::size_t n = xv.rows(), m = xv.cols();
  std::vector<double> v = xv.values;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) v[i * m + j] += bv.values[j];
  }
  const std::size_t ix = x.id(), ib = b.id();
  return t.record(detail::like(xv, std::move(v)), t.needs_grad(x) || t.needs_grad(b),
                  [ix, ib, n, m](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    if (tp.needs_grad(ix)) detail::accumulate(tp.grad(ix), g);
                    if (tp.needs_grad(ib)) {
                      auto& gb = tp.grad(ib);
                      for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
                      }
                    }
                  });
}

/// max(0, x). The derivative at exactly 0 is taken as 0.
inline Var relu(const Var& x) {
  Tape& t = x.tape();
  std::vector<double> v = x.value().values;
  for (double& a : v) a = a > 0.0 ? a : 0.0;
  const std::size_t ix = x.id();
  return t.record(detail::like(x.value(), std::move(v)), t.needs_grad(x), [ix](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    const auto& xv = tp.value(ix).values;
    auto& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

/// Inverted dropout: kept entries are scaled by 1/(1-p).
inline Var dropout(const Var& x, double p, RngStream& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: rate must lie in [0, 1)");
  if (p == 0.0) return x;
  Tape& t = x.tape();
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  const double keep = 1.0 / (1.0 - p);
  for (double& m : *mask) m = rng.uniform() < p ? 0.0 : keep;
  std::vector<double> v = x.value().values;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= (*mask)[i];
  const std::size_t ix = x.id();
  return t.record(detail::like(x.value(), std::move(v)), t.needs_grad(x), [ix, mask](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

/// Constant sparse operator applied on the left: out = A x.
inline Var spmm(std::shared_ptr<const SparseMatrix> a, const Var& x) {
  Tape& t = x.tape();
  Tensor out = a->multiply(x.value());
  const std::size_t ix = x.id();
  return t.record(std::move(out), t.needs_grad(x), [ix, a](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad(ix);
    const std::size_t m = tp.value(ix).cols();
    for (std::size_t r = 0; r < a->rows; ++r) {
      const double* gr = g.data() + r * m;
      for (std::size_t k = a->row_ptr[r]; k < a->row_ptr[r + 1]; ++k) {
        double* dst = gx.data() + a->col_idx[k] * m;
        const double w = a->weights[k];
        for (std::size_t j = 0; j < m; ++j) dst[j] += w * gr[j];
      }
    }
  });
}

/// [a || b] along columns.
inline Var concat_cols(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw ShapeError("concat_cols: row counts differ, " + shape_string({av.rows(), av.cols()}) + " vs " +
                     shape_string({bv.rows(), bv.cols()}));
  }
  const std::size_t n = av.rows(), ma = av.cols(), mb = bv.cols();
  Tensor out = Tensor::zeros(n, ma + mb);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.values.data() + i * ma, ma, out.values.data() + i * (ma + mb));
    std::copy_n(bv.values.data() + i * mb, mb, out.values.data() + i * (ma + mb) + ma);
  }
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b), [ia, ib, n, ma, mb](Tape& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.needs_grad(ia)) {
      auto& ga = tp.grad(ia);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < ma; ++j) ga[i * ma + j] += g[i * (ma + mb) + j];
      }
    }
    if (tp.needs_grad(ib)) {
      auto& gb = tp.grad(ib);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < mb; ++j) gb[i * mb + j] += g[i * (ma + mb) + ma + j];
      }
    }
  });
}

/// Copy of x that the backward pass treats as a constant.
inline Var stop_gradient(const Var& x) {
  Tensor v = x.value();
  v.grad.reset();
  return x.tape().constant(std::move(v));
}

inline Var sum(const Var& x) {
  Tape& t = x.tape();
  double s = 0.0;
  for (double v : x.value().values) s += v;
  const std::size_t ix = x.id();
  return t.record(Tensor({1, 1}, {s}), t.needs_grad(x), [ix](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    for (double& gx : tp.grad(ix)) gx += g;
  });
}

/// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& logits) {
  const std::size_t n = logits.rows(), c = logits.cols();
  Tensor p = Tensor::zeros(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.values.data() + i * c;
    double* pi = p.values.data() + i * c;
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      pi[j] = std::exp(z[j] - mx);
      s += pi[j];
    }
    for (std::size_t j = 0; j < c; ++j) pi[j] /= s;
  }
  return p;
}

struct CrossEntropyResult {
  Var loss;
  Tensor probs;
};

/// Mean negative log-likelihood of integer labels under row-wise softmax.
inline CrossEntropyResult softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  const std::size_t n = z.rows(), c = z.cols();
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                              std::to_string(i) + " outside [0, " + std::to_string(c) + ")");
    }
  }
  Tensor probs = softmax_rows(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* zi = z.values.data() + i * c;
    const double mx = *std::max_element(zi, zi + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(zi[j] - mx);
    loss += (mx + std::log(s)) - zi[labels[i]];
  }
  loss /= static_cast<double>(std::max<std::size_t>(n, 1));

  Tape& t = logits.tape();
  auto saved = std::make_shared<std::pair<Tensor, std::vector<int>>>(probs, std::vector<int>(labels.begin(), labels.end()));
  const std::size_t iz = logits.id();
  Var out = t.record(Tensor({1, 1}, {loss}), t.needs_grad(logits), [iz, saved, n, c](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0] / static_cast<double>(std::max<std::size_t>(n, 1));
    auto& gz = tp.grad(iz);
    const auto& p = saved->first.values;
    const auto& y = saved->second;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        gz[i * c + j] += g * (p[i * c + j] - (static_cast<int>(j) == y[i] ? 1.0 : 0.0));
      }
    }
  });
  return {out, std::move(probs)};
}

}  // namespace gduq
