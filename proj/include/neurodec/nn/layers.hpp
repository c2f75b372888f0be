#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "neurodec/tensor.hpp"

namespace neurodec::nn {

enum class Mode { train, infer };

// --- dense -----------------------------------------------------------------

struct DenseParams {
  Tensor weights;  // [out x in]
  Tensor bias;     // [out]

  std::size_t in() const { return weights.cols(); }
  std::size_t out() const { return weights.rows(); }
};

// Glorot-uniform weights, zero bias.
inline DenseParams make_dense(std::size_t in, std::size_t out, Rng& rng) {
  DenseParams p{Tensor::matrix(out, in), Tensor::vector(out)};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& w : p.weights.values) w = dist(rng);
  return p;
}

inline DenseParams zeros_like(const DenseParams& p) {
  return {neurodec::zeros_like(p.weights), neurodec::zeros_like(p.bias)};
}

// Accepts [batch x in] or a single [in] vector (returned as [out]).
inline Tensor dense_apply(const DenseParams& params, const Tensor& input) {
  const bool single = input.rank() == 1;
  const std::size_t width = single ? input.size() : input.cols();
  require(width == params.in() && (single || input.rank() == 2), ErrorKind::dimension,
          "dense layer expects input width " + std::to_string(params.in()) + " (weights " +
              params.weights.shape_string() + "), got input " + input.shape_string());
  Tensor batch = single ? Tensor({1, width}, input.values) : Tensor();
  Tensor out = matmul_nt(single ? batch : input, params.weights);
  for (std::size_t b = 0; b < out.rows(); ++b) {
    auto r = out.row(b);
    for (std::size_t o = 0; o < r.size(); ++o) r[o] += params.bias[o];
  }
  if (single) out.shape = {params.out()};
  return out;
}

// Accumulates dW, db into `grads` and returns dL/dinput. Batch form only.
inline Tensor dense_backward(const DenseParams& params, const Tensor& input, const Tensor& grad_out,
                             DenseParams& grads) {
  require(grad_out.rows() == input.rows() && grad_out.cols() == params.out(), ErrorKind::dimension,
          "dense backward grad " + grad_out.shape_string() + " vs input " + input.shape_string());
  add_inplace(grads.weights, matmul_tn(grad_out, input));
  for (std::size_t b = 0; b < grad_out.rows(); ++b) {
    auto r = grad_out.row(b);
    for (std::size_t o = 0; o < r.size(); ++o) grads.bias[o] += r[o];
  }
  return matmul(grad_out, params.weights);
}

// --- leaky relu --------------------------------------------------------------

inline Tensor leaky_relu(const Tensor& input, double alpha) {
  require(alpha >= 0.0, ErrorKind::argument, "leaky relu alpha must be >= 0");
  Tensor out = input;
  for (double& v : out.values)
    if (v < 0.0) v *= alpha;
  return out;
}

inline double leaky_relu(double x, double alpha) { return x >= 0.0 ? x : alpha * x; }

inline Tensor leaky_relu_backward(const Tensor& pre_activation, const Tensor& grad_out, double alpha) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (pre_activation[i] < 0.0) g[i] *= alpha;
  return g;
}

// --- batch normalization -----------------------------------------------------

struct BatchNormParams {
  Tensor gain;
  Tensor shift;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;
};

inline BatchNormParams make_batch_norm(std::size_t width, double momentum = 0.9, double epsilon = 1e-5) {
  return {Tensor::vector(width, 1.0), Tensor::vector(width, 0.0), Tensor::vector(width, 0.0),
          Tensor::vector(width, 1.0), momentum, epsilon};
}

struct BatchNormCache {
  Tensor normalized;            // x_hat, [batch x d]
  std::vector<double> inv_std;  // per column
};

// Train mode normalizes with biased batch statistics and folds them into the
// running estimates: running = momentum * running + (1 - momentum) * batch.
inline Tensor batch_norm(const Tensor& input, BatchNormParams& params, Mode mode,
                         BatchNormCache* cache = nullptr) {
  const std::size_t n = input.rows();
  const std::size_t d = input.cols();
  require(d == params.gain.size(), ErrorKind::dimension,
          "batch norm width " + std::to_string(params.gain.size()) + " vs input " + input.shape_string());
  Tensor out = Tensor::matrix(n, d);

  if (mode == Mode::infer) {
    for (std::size_t j = 0; j < d; ++j) {
      const double inv = 1.0 / std::sqrt(params.running_var[j] + params.epsilon);
      for (std::size_t b = 0; b < n; ++b)
        out(b, j) = params.gain[j] * (input(b, j) - params.running_mean[j]) * inv + params.shift[j];
    }
    return out;
  }

  require(n >= 2, ErrorKind::contract, "batch norm in train mode needs batch >= 2, got " + std::to_string(n));
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < d; ++j) mean[j] += input(b, j);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = input(b, j) - mean[j];
      var[j] += c * c;
    }
  for (double& v : var) v /= static_cast<double>(n);

  BatchNormCache local;
  BatchNormCache& c = cache ? *cache : local;
  c.normalized = Tensor::matrix(n, d);
  c.inv_std.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    c.inv_std[j] = 1.0 / std::sqrt(var[j] + params.epsilon);
    params.running_mean[j] = params.momentum * params.running_mean[j] + (1.0 - params.momentum) * mean[j];
    params.running_var[j] = params.momentum * params.running_var[j] + (1.0 - params.momentum) * var[j];
  }
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (input(b, j) - mean[j]) * c.inv_std[j];
      c.normalized(b, j) = xh;
      out(b, j) = params.gain[j] * xh + params.shift[j];
    }
  return out;
}

// Train-mode backward. Accumulates into grads.gain / grads.shift.
inline Tensor batch_norm_backward(const BatchNormParams& params, const BatchNormCache& cache,
                                  const Tensor& grad_out, BatchNormParams& grads) {
  const std::size_t n = grad_out.rows();
  const std::size_t d = grad_out.cols();
  Tensor dx = Tensor::matrix(n, d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const double g = grad_out(b, j);
      const double xh = cache.normalized(b, j);
      grads.gain[j] += g * xh;
      grads.shift[j] += g;
      const double dxh = g * params.gain[j];
      sum_dxh += dxh;
      sum_dxh_xh += dxh * xh;
    }
    for (std::size_t b = 0; b < n; ++b) {
      const double dxh = grad_out(b, j) * params.gain[j];
      dx(b, j) = cache.inv_std[j] * (dxh - inv_n * sum_dxh - cache.normalized(b, j) * inv_n * sum_dxh_xh);
    }
  }
  return dx;
}

// --- dropout -------------------------------------------------------------------

// Inverted dropout. `mask`, when given, receives the per-element scale
// (0 or 1/(1-rate)) so the backward pass is a plain elementwise product.
inline Tensor dropout(const Tensor& input, double rate, Rng& rng, Mode mode, Tensor* mask = nullptr) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::argument, "dropout rate must be in [0,1)");
  if (mode == Mode::infer || rate == 0.0) {
    if (mask) *mask = Tensor(input.shape, 1.0);
    return input;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor out = input;
  Tensor local;
  Tensor& m = mask ? *mask : local;
  m = Tensor(input.shape, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = u(rng) < rate ? 0.0 : keep_scale;
    m[i] = s;
    out[i] *= s;
  }
  return out;
}

// --- softmax ---------------------------------------------------------------------

inline Tensor softmax(const Tensor& logits) {
  const bool single = logits.rank() == 1;
  const std::size_t rows = single ? 1 : logits.rows();
  const std::size_t cols = single ? logits.size() : logits.cols();
  Tensor out = logits;
  for (std::size_t b = 0; b < rows; ++b) {
    double* r = out.values.data() + b * cols;
    const double mx = *std::max_element(r, r + cols);
    double sum = 0.0;
    for (std::size_t i = 0; i < cols; ++i) {
      r[i] = std::exp(r[i] - mx);
      sum += r[i];
    }
    for (std::size_t i = 0; i < cols; ++i) r[i] /= sum;
  }
  return out;
}

}  // namespace neurodec::nn
