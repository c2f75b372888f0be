#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "neurodec/tensor.hpp"

namespace neurodec::nn {

// One evaluation of a differentiable procedure. `active_set` is an optional
// fingerprint of the piecewise-linear regime (e.g. leaky-ReLU sign pattern);
// a perturbation that changes it straddles a kink and is not comparable.
struct Evaluation {
  double loss = 0.0;
  std::uint64_t active_set = 0;
};

// Evaluates the procedure at `point`; fills `gradient` (same layout as
// point) when non-null.
using Differentiable = std::function<Evaluation(const std::vector<Tensor>& point, std::vector<Tensor>* gradient)>;

struct GradCheckOptions {
  double epsilon = 1e-3;
  double tolerance = 1e-4;
  // Denominator floor for the relative error; below it the comparison is
  // effectively absolute.
  double scale_floor = 1e-3;
  // 0 checks every element; otherwise a seeded sample per block.
  std::size_t max_elements_per_block = 0;
  std::uint64_t sample_seed = 0;
};

struct BlockReport {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<BlockReport> blocks;

  bool passed() const {
    return std::all_of(blocks.begin(), blocks.end(), [](const BlockReport& b) { return b.passed; });
  }
  double max_error() const {
    double m = 0.0;
    for (const auto& b : blocks) m = std::max(m, b.max_relative_error);
    return m;
  }
};

inline double gradient_relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares the procedure's analytic gradient against central differences
// (f(x+e) - f(x-e)) / 2e, block by block.
inline GradCheckReport finite_difference_check(const Differentiable& f, std::vector<Tensor> point,
                                               const std::vector<std::string>& names,
                                               const GradCheckOptions& opts = {}) {
  require(opts.epsilon > 0.0, ErrorKind::argument, "finite-difference perturbation must be > 0");
  require(names.size() == point.size(), ErrorKind::argument, "one name per parameter block required");

  std::vector<Tensor> analytic;
  analytic.reserve(point.size());
  for (const auto& p : point) analytic.push_back(zeros_like(p));
  const Evaluation base = f(point, &analytic);
  require(std::isfinite(base.loss), ErrorKind::numeric, "non-finite loss at the check point");

  Rng sampler(opts.sample_seed);
  GradCheckReport report;
  for (std::size_t k = 0; k < point.size(); ++k) {
    BlockReport block{names[k]};
    std::vector<std::size_t> idx(point[k].size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opts.max_elements_per_block > 0 && idx.size() > opts.max_elements_per_block) {
      std::shuffle(idx.begin(), idx.end(), sampler);
      idx.resize(opts.max_elements_per_block);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      const double saved = point[k][i];
      point[k][i] = saved + opts.epsilon;
      const Evaluation up = f(point, nullptr);
      point[k][i] = saved - opts.epsilon;
      const Evaluation down = f(point, nullptr);
      point[k][i] = saved;
      if (!std::isfinite(up.loss) || !std::isfinite(down.loss))
        fail(ErrorKind::numeric, "non-finite loss when perturbing " + names[k] + "[" + std::to_string(i) + "]");
      if (up.active_set != base.active_set || down.active_set != base.active_set) {
        ++block.skipped_kinks;
        continue;
      }
      const double numeric = (up.loss - down.loss) / (2.0 * opts.epsilon);
      const double err = gradient_relative_error(analytic[k][i], numeric, opts.scale_floor);
      block.max_relative_error = std::max(block.max_relative_error, err);
      ++block.checked;
    }
    block.passed = block.max_relative_error < opts.tolerance;
    report.blocks.push_back(std::move(block));
  }
  return report;
}

// FNV-1a over the sign bits of pre-activations; feeds Evaluation::active_set.
inline std::uint64_t sign_fingerprint(const Tensor& pre_activation, std::uint64_t seed = 1469598103934665603ull) {
  std::uint64_t h = seed;
  for (double v : pre_activation.values) {
    h ^= v < 0.0 ? 1u : 2u;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace neurodec::nn
