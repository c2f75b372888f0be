#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>

#include "neurodec/model/decoder.hpp"
#include "neurodec/nn/similarity.hpp"

namespace neurodec::losses {

struct LossWeights {
  double w_reg = 1.0;
  double w_class = 1.0;
  double w_rec = 1.0;
  double w_mean = 1.0;
  double neg_term_scale = 1.0;  // scales the sum over non-target words in L_reg / L_mean
};

struct LossValue {
  double value = 0.0;
  Tensor grad;  // same shape as the differentiated input
};

// Per-word mean hidden representation at each tracked layer.
struct MeanTracker {
  std::map<model::Layer, Tensor> means;  // layer -> [v x d_l]
  std::vector<std::size_t> counts;       // scans averaged per word
  int epoch_stamp = -1;
};

namespace detail {

// sum_n [ cosdist(x_n, t_{y_n}) - s * sum_{j != y_n} cosdist(x_n, t_j) ]
inline LossValue attract_repel(const Tensor& x, std::span<const int> targets, const Tensor& table, double scale) {
  require(x.rows() == targets.size(), ErrorKind::dimension,
          std::to_string(x.rows()) + " rows vs " + std::to_string(targets.size()) + " targets");
  require(x.cols() == table.cols(), ErrorKind::dimension,
          "prediction width " + std::to_string(x.cols()) + " vs target width " + std::to_string(table.cols()));
  LossValue out{0.0, zeros_like(x)};
  for (std::size_t n = 0; n < x.rows(); ++n) {
    const auto xn = x.row(n);
    require(norm(xn) > 0.0, ErrorKind::degenerate_vector, "zero-norm vector in row " + std::to_string(n));
    const auto t = static_cast<std::size_t>(targets[n]);
    require(t < table.rows(), ErrorKind::range, "target index " + std::to_string(targets[n]) + " out of range");
    for (std::size_t j = 0; j < table.rows(); ++j) {
      const double coef = j == t ? 1.0 : -scale;
      out.value += coef * nn::cosine_distance(xn, table.row(j));
      nn::cosine_distance_grad(xn, table.row(j), coef, out.grad.row(n));
    }
  }
  return out;
}

}  // namespace detail

// `embeddings` is the [v x d] matrix of target-word embeddings in vocabulary order.
inline LossValue loss_reg(const Tensor& regression_out, std::span<const int> targets, const Tensor& embeddings,
                          double neg_term_scale = 1.0) {
  return detail::attract_repel(regression_out, targets, embeddings, neg_term_scale);
}

inline LossValue loss_reg(const Tensor& regression_out, std::span<const int> targets,
                          const data::EmbeddingTable& table, const data::Vocabulary& vocab,
                          double neg_term_scale = 1.0) {
  return loss_reg(regression_out, targets, data::embedding_matrix(table, vocab), neg_term_scale);
}

inline constexpr double kProbabilityFloor = 1e-12;

// Cross-entropy -sum log p[target]. The gradient is with respect to the
// pre-softmax logits (p - onehot); rows whose target probability hit the
// clamp contribute no gradient.
inline LossValue loss_class(const Tensor& class_probs, std::span<const int> targets) {
  require(class_probs.rows() == targets.size(), ErrorKind::dimension, "probability rows vs targets");
  LossValue out{0.0, zeros_like(class_probs)};
  for (std::size_t n = 0; n < class_probs.rows(); ++n) {
    const auto t = static_cast<std::size_t>(targets[n]);
    require(t < class_probs.cols(), ErrorKind::range, "target index out of range");
    const double p = class_probs(n, t);
    out.value -= std::log(std::max(p, kProbabilityFloor));
    if (p >= kProbabilityFloor) {
      auto g = out.grad.row(n);
      const auto pr = class_probs.row(n);
      for (std::size_t j = 0; j < g.size(); ++j) g[j] = pr[j];
      g[t] -= 1.0;
    }
  }
  return out;
}

// sum_n cosdist(reconstruction_n, input_n)
inline LossValue loss_rec(const Tensor& reconstruction, const Tensor& inputs) {
  require(reconstruction.shape == inputs.shape, ErrorKind::dimension,
          "reconstruction " + reconstruction.shape_string() + " vs input " + inputs.shape_string());
  LossValue out{0.0, zeros_like(reconstruction)};
  for (std::size_t n = 0; n < inputs.rows(); ++n) {
    require(norm(reconstruction.row(n)) > 0.0 && norm(inputs.row(n)) > 0.0, ErrorKind::degenerate_vector,
            "zero-norm row " + std::to_string(n) + " in reconstruction loss");
    out.value += nn::cosine_distance(reconstruction.row(n), inputs.row(n));
    nn::cosine_distance_grad(reconstruction.row(n), inputs.row(n), 1.0, out.grad.row(n));
  }
  return out;
}

struct MeanLoss {
  double value = 0.0;
  std::map<model::Layer, Tensor> grads;
};

// Sum over tracked layers of the attract/repel term against the tracker's
// per-word means. Means are constants: no gradient reaches the tracker.
inline MeanLoss loss_mean(const std::map<model::Layer, const Tensor*>& hidden, std::span<const int> targets,
                          const MeanTracker& tracker, double neg_term_scale = 1.0) {
  MeanLoss out;
  for (std::size_t w = 0; w < tracker.counts.size(); ++w)
    require(tracker.counts[w] > 0, ErrorKind::tracker_state, "no mean for word index " + std::to_string(w));
  for (const auto& [layer, h] : hidden) {
    auto it = tracker.means.find(layer);
    require(it != tracker.means.end(), ErrorKind::tracker_state,
            std::string("tracker has no means for layer ") + model::to_string(layer));
    require(tracker.counts.size() == it->second.rows(), ErrorKind::tracker_state, "tracker counts/means mismatch");
    auto term = detail::attract_repel(*h, targets, it->second, neg_term_scale);
    out.value += term.value;
    out.grads[layer] = std::move(term.grad);
  }
  return out;
}

struct LossReport {
  double total = 0.0;
  std::map<std::string, double> terms{{"reg", 0.0}, {"class", 0.0}, {"rec", 0.0}, {"mean", 0.0}};
};

struct PhaseFlags {
  bool supervised = true;     // false during reconstruction-only pretraining
  bool mean_active = false;   // phase 2 of supervised training
};

struct LossContext {
  const Tensor* embeddings = nullptr;  // [v x d], needed for L_reg
  const MeanTracker* tracker = nullptr;
  std::vector<model::Layer> tracked_layers{model::Layer::hidden1, model::Layer::latent};
};

struct LossResult {
  LossReport report;
  model::ActivationGrads grads;
};

// Weighted sum of the active terms. A term is active when its weight is
// positive, the phase allows it and the activations it needs exist.
inline LossResult total_loss(const model::ForwardActivations& acts, std::span<const int> targets,
                             const LossContext& ctx, const LossWeights& w, PhaseFlags phase) {
  require(w.w_reg > 0.0 || w.w_class > 0.0 || w.w_rec > 0.0 || w.w_mean > 0.0, ErrorKind::config,
          "all loss weights are zero");
  require(w.w_reg >= 0.0 && w.w_class >= 0.0 && w.w_rec >= 0.0 && w.w_mean >= 0.0, ErrorKind::config,
          "loss weights must be nonnegative");
  LossResult r;
  const auto scaled = [](Tensor g, double s) {
    for (double& v : g.values) v *= s;
    return g;
  };

  if (phase.supervised && w.w_reg > 0.0 && acts.regression_out) {
    require(ctx.embeddings != nullptr, ErrorKind::config, "regression loss needs the embedding matrix");
    auto t = loss_reg(*acts.regression_out, targets, *ctx.embeddings, w.neg_term_scale);
    r.report.terms["reg"] = t.value;
    r.report.total += w.w_reg * t.value;
    r.grads.regression_out = scaled(std::move(t.grad), w.w_reg);
  }
  if (phase.supervised && w.w_class > 0.0 && acts.class_probs) {
    auto t = loss_class(*acts.class_probs, targets);
    r.report.terms["class"] = t.value;
    r.report.total += w.w_class * t.value;
    r.grads.logits = scaled(std::move(t.grad), w.w_class);
  }
  if (w.w_rec > 0.0 && acts.reconstruction) {
    auto t = loss_rec(*acts.reconstruction, acts.reconstruction_target);
    r.report.terms["rec"] = t.value;
    r.report.total += w.w_rec * t.value;
    r.grads.reconstruction = scaled(std::move(t.grad), w.w_rec);
  }
  if (phase.supervised && phase.mean_active && w.w_mean > 0.0) {
    require(ctx.tracker != nullptr, ErrorKind::tracker_state, "mean regularization active without a tracker");
    std::map<model::Layer, const Tensor*> hidden;
    for (auto l : ctx.tracked_layers) hidden[l] = &acts.layer(l);
    auto t = loss_mean(hidden, targets, *ctx.tracker, w.neg_term_scale);
    r.report.terms["mean"] = t.value;
    r.report.total += w.w_mean * t.value;
    for (auto& [layer, g] : t.grads) {
      Tensor s = scaled(std::move(g), w.w_mean);
      switch (layer) {
        case model::Layer::roi_concat: r.grads.roi_concat = std::move(s); break;
        case model::Layer::hidden1: r.grads.hidden1 = std::move(s); break;
        case model::Layer::latent: r.grads.latent = std::move(s); break;
      }
    }
  }
  return r;
}

}  // namespace neurodec::losses
