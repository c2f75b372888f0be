#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "neurodec/tensor.hpp"

namespace neurodec::nn {

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::dimension,
          "cosine of vectors sized " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  const double na = norm(a), nb = norm(b);
  require(na > 0.0 && nb > 0.0, ErrorKind::degenerate_vector, "cosine of a zero-norm vector");
  return dot(a, b) / (na * nb);
}

// 1 - cos(a, b), in [0, 2].
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  return 1.0 - cosine_similarity(a, b);
}

inline double cosine_distance(const Tensor& a, const Tensor& b) {
  return cosine_distance(std::span<const double>(a.values), std::span<const double>(b.values));
}

// d/da of cosine_distance(a, b), accumulated as `scale * grad` into `out`.
inline void cosine_distance_grad(std::span<const double> a, std::span<const double> b, double scale,
                                 std::span<double> out) {
  const double na = norm(a), nb = norm(b);
  require(na > 0.0 && nb > 0.0, ErrorKind::degenerate_vector, "cosine gradient at a zero-norm vector");
  const double ab = dot(a, b);
  const double inv = 1.0 / (na * nb);
  const double coef_a = ab / (na * na * na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += scale * (coef_a * a[i] - b[i] * inv);
}

inline double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::dimension, "pearson of vectors with different lengths");
  require(a.size() >= 2, ErrorKind::argument, "pearson needs at least 2 elements");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  require(saa > 0.0 && sbb > 0.0, ErrorKind::degenerate_vector, "pearson of a constant vector");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double pearson_correlation(const Tensor& a, const Tensor& b) {
  return pearson_correlation(std::span<const double>(a.values), std::span<const double>(b.values));
}

}  // namespace neurodec::nn
