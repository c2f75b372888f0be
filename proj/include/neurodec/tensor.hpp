#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "neurodec/error.hpp"

namespace neurodec {

using Rng = std::mt19937_64;

// Dense row-major array of doubles. Rank 1 and rank 2 cover everything the
// decoder needs; higher ranks are representable but have no helpers.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
      : shape(std::move(dims)), values(element_count(shape), fill) {}

  Tensor(std::vector<std::size_t> dims, std::vector<double> data)
      : shape(std::move(dims)), values(std::move(data)) {
    require(element_count(shape) == values.size(), ErrorKind::dimension,
            "shape " + shape_string(shape) + " holds " + std::to_string(element_count(shape)) +
                " values, got " + std::to_string(values.size()));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor vector(std::size_t n, double fill = 0.0) { return Tensor({n}, fill); }
  static Tensor from(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  static std::string shape_string(const std::vector<std::size_t>& dims) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? " x " : "") << dims[i];
    os << ']';
    return os.str();
  }

  std::string shape_string() const { return shape_string(shape); }
  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {values.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols(), cols()}; }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape, 0.0); }

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

inline ConstMatMap as_matrix(const Tensor& t) {
  return {t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
inline MatMap as_matrix(Tensor& t) {
  return {t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

}  // namespace detail

// a[n x k] * b[m x k]^T -> [n x m]
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.cols(), ErrorKind::dimension,
          "matmul_nt " + a.shape_string() + " vs " + b.shape_string());
  Tensor out = Tensor::matrix(a.rows(), b.rows());
  if (out.size() == 0 || a.cols() == 0) return out;
  detail::as_matrix(out).noalias() = detail::as_matrix(a) * detail::as_matrix(b).transpose();
  return out;
}

// a[n x k] * b[k x m] -> [n x m]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), ErrorKind::dimension,
          "matmul " + a.shape_string() + " vs " + b.shape_string());
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  if (out.size() == 0 || a.cols() == 0) return out;
  detail::as_matrix(out).noalias() = detail::as_matrix(a) * detail::as_matrix(b);
  return out;
}

// a[k x n]^T * b[k x m] -> [n x m]
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows(), ErrorKind::dimension,
          "matmul_tn " + a.shape_string() + " vs " + b.shape_string());
  Tensor out = Tensor::matrix(a.cols(), b.cols());
  if (out.size() == 0 || a.rows() == 0) return out;
  detail::as_matrix(out).noalias() = detail::as_matrix(a).transpose() * detail::as_matrix(b);
  return out;
}

inline void add_inplace(Tensor& dst, const Tensor& src) {
  require(dst.shape == src.shape, ErrorKind::dimension,
          "add " + dst.shape_string() + " vs " + src.shape_string());
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Copy selected columns of a [batch x n] matrix into a [batch x idx.size()] matrix.
inline Tensor gather_columns(const Tensor& input, std::span<const std::size_t> idx) {
  Tensor out = Tensor::matrix(input.rows(), idx.size());
  for (std::size_t b = 0; b < input.rows(); ++b) {
    auto src = input.row(b);
    auto dst = out.row(b);
    for (std::size_t i = 0; i < idx.size(); ++i) dst[i] = src[idx[i]];
  }
  return out;
}

inline Tensor slice_columns(const Tensor& input, std::size_t begin, std::size_t width) {
  Tensor out = Tensor::matrix(input.rows(), width);
  for (std::size_t b = 0; b < input.rows(); ++b)
    for (std::size_t i = 0; i < width; ++i) out(b, i) = input(b, begin + i);
  return out;
}

inline Tensor concat_columns(std::span<const Tensor> parts) {
  std::size_t rows = parts.empty() ? 0 : parts.front().rows();
  std::size_t width = 0;
  for (const auto& p : parts) width += p.cols();
  Tensor out = Tensor::matrix(rows, width);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, ErrorKind::dimension, "concat row mismatch");
    for (std::size_t b = 0; b < rows; ++b)
      for (std::size_t i = 0; i < p.cols(); ++i) out(b, offset + i) = p(b, i);
    offset += p.cols();
  }
  return out;
}

inline Tensor select_rows(const Tensor& input, std::span<const std::size_t> rows) {
  Tensor out = Tensor::matrix(rows.size(), input.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = input.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace neurodec
