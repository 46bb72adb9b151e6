#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "tabfm/core/error.hpp"

namespace tabfm::nn {

/// Dense row-major buffer. Most tensors here are matrices (batch x features);
/// cols() folds every trailing dimension.
template <typename Real>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<Real> data;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, Real fill = Real(0))
      : shape{rows, cols}, data(rows * cols, fill) {}
  explicit Tensor(std::vector<std::size_t> dims, Real fill = Real(0)) : shape(std::move(dims)) {
    data.assign(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()), fill);
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return rows() == 0 ? 0 : data.size() / rows(); }
  bool empty() const { return data.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  Real* row_ptr(std::size_t r) { return data.data() + r * cols(); }
  const Real* row_ptr(std::size_t r) const { return data.data() + r * cols(); }

  using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<Matrix> mat() { return {data.data(), Eigen::Index(rows()), Eigen::Index(cols())}; }
  Eigen::Map<const Matrix> mat() const {
    return {data.data(), Eigen::Index(rows()), Eigen::Index(cols())};
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  void fill(Real v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  /// Reinterprets the row-major buffer with a new row count (PacGAN packing).
  Tensor reshaped(std::size_t new_rows) const {
    require(new_rows > 0 && size() % new_rows == 0, ErrorKind::Shape, "reshape: incompatible rows");
    Tensor t;
    t.shape = {new_rows, size() / new_rows};
    t.data = data;
    return t;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> t;
    t.shape = shape;
    t.data.assign(data.begin(), data.end());
    return t;
  }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

template <typename Real>
void require_shape(const Tensor<Real>& t, std::size_t rows, std::size_t cols, const char* what) {
  require(t.rows() == rows && t.cols() == cols, ErrorKind::Shape,
          std::string(what) + ": expected [" + std::to_string(rows) + "," + std::to_string(cols) +
              "], got " + shape_str(t.shape));
}

template <typename Real>
Tensor<Real> concat_cols(const Tensor<Real>& a, const Tensor<Real>& b) {
  require(a.rows() == b.rows(), ErrorKind::Shape, "concat_cols: row mismatch");
  Tensor<Real> out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row_ptr(r), a.row_ptr(r) + a.cols(), out.row_ptr(r));
    std::copy(b.row_ptr(r), b.row_ptr(r) + b.cols(), out.row_ptr(r) + a.cols());
  }
  return out;
}

template <typename Real>
Tensor<Real> slice_cols(const Tensor<Real>& a, std::size_t start, std::size_t width) {
  require(start + width <= a.cols(), ErrorKind::Shape, "slice_cols: out of range");
  Tensor<Real> out(a.rows(), width);
  for (std::size_t r = 0; r < a.rows(); ++r)
    std::copy(a.row_ptr(r) + start, a.row_ptr(r) + start + width, out.row_ptr(r));
  return out;
}

/// A trainable tensor with its gradient accumulator.
template <typename Real>
struct Param {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  bool trainable = true;  // false for buffers such as running statistics

  Param() = default;
  Param(std::string n, Tensor<Real> v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor<Real>(value.shape);
  }
  void zero_grad() { grad.fill(Real(0)); }
};

}  // namespace tabfm::nn
