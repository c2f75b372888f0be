#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "neurodec/tensor.hpp"

namespace neurodec::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moments are created on the first step, one pair per parameter tensor.
struct OptimizerState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step = 0;
};

inline void optimizer_step(OptimizerState& state, std::span<Tensor* const> params,
                           std::span<const Tensor* const> grads) {
  require(params.size() == grads.size(), ErrorKind::dimension, "optimizer: parameter/gradient count mismatch");
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.push_back(zeros_like(*p));
      state.second_moment.push_back(zeros_like(*p));
    }
  }
  require(state.first_moment.size() == params.size(), ErrorKind::dimension,
          "optimizer state tracks " + std::to_string(state.first_moment.size()) + " tensors, got " +
              std::to_string(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k)
    require(params[k]->shape == grads[k]->shape && params[k]->shape == state.first_moment[k].shape,
            ErrorKind::dimension,
            "optimizer: parameter " + params[k]->shape_string() + " vs gradient " + grads[k]->shape_string());

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k]->values;
    const auto& g = grads[k]->values;
    auto& m = state.first_moment[k].values;
    auto& v = state.second_moment[k].values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

inline void optimizer_step(OptimizerState& state, Tensor& param, const Tensor& grad) {
  Tensor* p[] = {&param};
  const Tensor* g[] = {&grad};
  optimizer_step(state, std::span<Tensor* const>(p), std::span<const Tensor* const>(g));
}

}  // namespace neurodec::nn
