#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gduq/core/errors.hpp"

namespace gduq {

/// Dense row-major tensor of doubles. Every op in this library works on rank-1
/// or rank-2 tensors; rank-1 tensors behave as a single row.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::optional<std::vector<double>> grad;
  std::optional<std::size_t> tape_id;

  Tensor() = default;

  Tensor(std::vector<std::size_t> shp, std::vector<double> vals) : shape(std::move(shp)), values(std::move(vals)) {
    if (element_count(shape) != values.size()) {
      throw ShapeError("tensor shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
                       " values");
    }
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}, std::vector<double>(rows * cols, 0.0)); }

  static Tensor filled(std::size_t rows, std::size_t cols, double v) {
    return Tensor({rows, cols}, std::vector<double>(rows * cols, v));
  }

  static Tensor identity(std::size_t n) {
    Tensor t = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  static Tensor from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.front().size() : 0;
    Tensor t = zeros(r, c);
    for (std::size_t i = 0; i < r; ++i) {
      if (rows[i].size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
      std::copy(rows[i].begin(), rows[i].end(), t.values.begin() + static_cast<std::ptrdiff_t>(i * c));
    }
    return t;
  }

  static Tensor row_vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
  }

  static std::size_t element_count(const std::vector<std::size_t>& shp) {
    return std::accumulate(shp.begin(), shp.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const noexcept { return values.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t rows() const noexcept { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const noexcept { return shape.empty() ? 1 : shape.back(); }

  double& at(std::size_t r, std::size_t c) noexcept { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const noexcept { return values[r * cols() + c]; }

  std::span<double> row(std::size_t r) noexcept { return {values.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const noexcept { return {values.data() + r * cols(), cols()}; }

  bool is_scalar() const noexcept { return values.size() == 1; }

  bool all_finite() const noexcept {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void zero_grad() { grad = std::vector<double>(values.size(), 0.0); }

  bool same_shape(const Tensor& o) const noexcept { return rows() == o.rows() && cols() == o.cols(); }
};

inline bool operator==(const Tensor& a, const Tensor& b) { return a.shape == b.shape && a.values == b.values; }

/// Constant sparse matrix in CSR form, used for graph propagation and pooling.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> weights;

  struct Entry {
    std::size_t row;
    std::size_t col;
    double weight;
  };

  /// Duplicate (row, col) entries are summed.
  static SparseMatrix from_entries(std::size_t rows, std::size_t cols, std::vector<Entry> entries) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
    SparseMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(rows + 1, 0);
    bool have_prev = false;
    Entry prev{};
    for (const auto& e : entries) {
      if (e.row >= rows || e.col >= cols) throw ShapeError("sparse entry out of range");
      if (have_prev && e.row == prev.row && e.col == prev.col) {
        m.weights.back() += e.weight;
        continue;
      }
      m.col_idx.push_back(e.col);
      m.weights.push_back(e.weight);
      ++m.row_ptr[e.row + 1];
      prev = e;
      have_prev = true;
    }
    for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
    return m;
  }

  std::size_t nnz() const noexcept { return col_idx.size(); }

  Tensor to_dense() const {
    Tensor d = Tensor::zeros(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d.at(r, col_idx[k]) += weights[k];
    }
    return d;
  }

  SparseMatrix transposed() const {
    std::vector<Entry> entries;
    entries.reserve(nnz());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) entries.push_back({col_idx[k], r, weights[k]});
    }
    return from_entries(cols, rows, std::move(entries));
  }

  /// out[rows x m] = this * x[cols x m]
  Tensor multiply(const Tensor& x) const {
    if (x.rows() != cols) {
      throw ShapeError("sparse multiply: matrix " + shape_string({rows, cols}) + " vs dense " + shape_string(x.shape));
    }
    const std::size_t m = x.cols();
    Tensor out = Tensor::zeros(rows, m);
    for (std::size_t r = 0; r < rows; ++r) {
      double* dst = out.values.data() + r * m;
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
        const double w = weights[k];
        const double* src = x.values.data() + col_idx[k] * m;
        for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
      }
    }
    return out;
  }
};

}  // namespace gduq
