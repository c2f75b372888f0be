#pragma once

#include <map>

#include "neurodec/losses.hpp"
#include "neurodec/nn/gradcheck.hpp"

namespace neurodec::checks {

// Per block, the worst case over every seed.
struct SuiteSummary {
  std::map<std::string, nn::BlockReport> blocks;
  int seeds = 0;

  bool passed() const {
    for (const auto& [name, b] : blocks)
      if (!b.passed) return false;
    return !blocks.empty();
  }
  double max_error() const {
    double m = 0.0;
    for (const auto& [name, b] : blocks) m = std::max(m, b.max_relative_error);
    return m;
  }
};

namespace detail {

inline Tensor gaussian(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> g(0.0, scale);
  for (double& v : t.values) v = g(rng);
  return t;
}

inline double weighted_sum(const Tensor& t, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * r[i];
  return s;
}

inline std::vector<int> random_targets(std::size_t n, std::size_t classes, Rng& rng) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(classes) - 1);
  std::vector<int> t(n);
  for (auto& x : t) x = d(rng);
  return t;
}

inline void merge(SuiteSummary& s, const std::string& prefix, const nn::GradCheckReport& r) {
  for (const auto& b : r.blocks) {
    const std::string name = prefix + "/" + b.name;
    auto [it, fresh] = s.blocks.try_emplace(name, b);
    it->second.name = name;
    if (fresh) continue;
    it->second.max_relative_error = std::max(it->second.max_relative_error, b.max_relative_error);
    it->second.checked += b.checked;
    it->second.skipped_kinks += b.skipped_kinks;
    it->second.passed = it->second.passed && b.passed;
  }
}

// Small decoder with every component switched on.
inline data::Atlas toy_atlas() {
  data::Atlas a;
  a.total_voxels = 30;
  a.rois = {{"a", {0, 1, 2, 3, 4, 5, 6, 7}}, {"b", {10, 11, 12, 13, 14, 15}}, {"c", {20, 21, 22, 23, 24, 25, 26, 27, 28}}};
  return a;
}

inline model::ModelConfig toy_model_config(bool roi_layer) {
  model::ModelConfig c;
  c.roi_divisor = 3;
  c.hidden1_size = 7;
  c.latent_size = 5;
  c.embedding_dim = 4;
  c.vocab_size = 4;
  c.regression_head = true;
  c.classification_head = true;
  c.autoencoder = true;
  c.use_roi_layer = roi_layer;
  c.dropout_rate = 0.25;
  return c;
}

}  // namespace detail

// The end-to-end decoder composes batch norm, cosine losses and softmax; its
// third derivatives are large enough that e = 1e-3 truncation alone exceeds
// 1e-4 on some elements, so the wiring check uses a smaller step.
inline nn::GradCheckOptions composite_options() {
  nn::GradCheckOptions o;
  o.epsilon = 1e-5;
  return o;
}

// Central-difference checks of every layer and every loss term (`opts`),
// plus the full decoder in both input modes with all four loss terms active
// (`composite`), repeated for `seeds` seeds. Each procedure re-seeds its own
// dropout stream, so masks are identical across the perturbed evaluations.
inline SuiteSummary run_gradient_suite(int seeds = 10, nn::GradCheckOptions opts = {},
                                       nn::GradCheckOptions composite = composite_options()) {
  using detail::gaussian;
  using detail::weighted_sum;
  SuiteSummary summary;
  summary.seeds = seeds;
  constexpr std::size_t B = 6;

  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed) * 7919u + 17u);
    opts.sample_seed = static_cast<std::uint64_t>(seed);
    composite.sample_seed = opts.sample_seed;

    {  // dense
      const Tensor r = gaussian({B, 5}, rng);
      auto f = [&](const std::vector<Tensor>& p, std::vector<Tensor>* g) {
        nn::DenseParams d{p[0], p[1]};
        const Tensor out = nn::dense_apply(d, p[2]);
        if (g) {
          nn::DenseParams gd{(*g)[0], (*g)[1]};
          (*g)[2] = nn::dense_backward(d, p[2], r, gd);
          (*g)[0] = gd.weights;
          (*g)[1] = gd.bias;
        }
        return nn::Evaluation{weighted_sum(out, r), 0};
      };
      detail::merge(summary, "dense",
                    nn::finite_difference_check(f, {gaussian({5, 4}, rng), gaussian({5}, rng), gaussian({B, 4}, rng)},
                                                {"weights", "bias", "input"}, opts));
    }
    {  // leaky relu
      const Tensor r = gaussian({B, 5}, rng);
      auto f = [&](const std::vector<Tensor>& p, std::vector<Tensor>* g) {
        if (g) (*g)[0] = nn::leaky_relu_backward(p[0], r, 0.3);
        return nn::Evaluation{weighted_sum(nn::leaky_relu(p[0], 0.3), r), nn::sign_fingerprint(p[0])};
      };
      detail::merge(summary, "leaky_relu", nn::finite_difference_check(f, {gaussian({B, 5}, rng)}, {"input"}, opts));
    }
    {  // batch norm, train mode
      const Tensor r = gaussian({B, 4}, rng);
      auto f = [&](const std::vector<Tensor>& p, std::vector<Tensor>* g) {
        auto bn = nn::make_batch_norm(4);
        bn.gain = p[0];
        bn.shift = p[1];
        nn::BatchNormCache cache;
        const Tensor out = nn::batch_norm(p[2], bn, nn::Mode::train, &cache);
        if (g) {
          auto gbn = nn::make_batch_norm(4);
          gbn.gain = zeros_like(p[0]);
          gbn.shift = zeros_like(p[1]);
          (*g)[2] = nn::batch_norm_backward(bn, cache, r, gbn);
          (*g)[0] = gbn.gain;
          (*g)[1] = gbn.shift;
        }
        return nn::Evaluation{weighted_sum(out, r), 0};
      };
      Tensor gain = gaussian({4}, rng, 0.5);
      for (double& v : gain.values) v += 1.0;
      detail::merge(summary, "batch_norm",
                    nn::finite_difference_check(f, {gain, gaussian({4}, rng), gaussian({B, 4}, rng)},
                                                {"gain", "shift", "input"}, opts));
    }
    {  // dropout with a fixed mask stream
      const Tensor r = gaussian({B, 5}, rng);
      const std::uint64_t mask_seed = rng();
      auto f = [&](const std::vector<Tensor>& p, std::vector<Tensor>* g) {
        Rng mr(mask_seed);
        Tensor mask;
        const Tensor out = nn::dropout(p[0], 0.4, mr, nn::Mode::train, &mask);
        if (g)
          for (std::size_t i = 0; i < mask.size(); ++i) (*g)[0][i] = mask[i] * r[i];
        return nn::Evaluation{weighted_sum(out, r), 0};
      };
      detail::merge(summary, "dropout", nn::finite_difference_check(f, {gaussian({B, 5}, rng)}, {"input"}, opts));
    }
    {  // softmax + cross-entropy
      const auto targets = detail::random_targets(B, 5, rng);
      auto f = [&](const std::vector<Tensor>& p, std::vector<Tensor>* g) {
        auto l = losses::loss_class(nn::softmax(p[0]), targets);
        if (g) (*g)[0] = l.grad;
        return nn::Evaluation{l.value, 0};
      };
      detail::merge(summary, "L_class", nn::finite_difference_check(f, {gaussian({B, 5}, rng)}, {"logits"}, opts));
    }
    {  // L_reg
      const Tensor table = gaussian({4, 6}, rng);
      const auto targets = detail::random_targets(B, 4, rng);
      auto f = [&](const std::vector<Tensor>& p, std::vector<Tensor>* g) {
        auto l = losses::loss_reg(p[0], targets, table, 0.5);
        if (g) (*g)[0] = l.grad;
        return nn::Evaluation{l.value, 0};
      };
      detail::merge(summary, "L_reg", nn::finite_difference_check(f, {gaussian({B, 6}, rng)}, {"prediction"}, opts));
    }
    {  // L_rec
      const Tensor input = gaussian({B, 9}, rng);
      auto f = [&](const std::vector<Tensor>& p, std::vector<Tensor>* g) {
        auto l = losses::loss_rec(p[0], input);
        if (g) (*g)[0] = l.grad;
        return nn::Evaluation{l.value, 0};
      };
      detail::merge(summary, "L_rec",
                    nn::finite_difference_check(f, {gaussian({B, 9}, rng)}, {"reconstruction"}, opts));
    }
    {  // L_mean over two layers
      losses::MeanTracker tracker;
      tracker.means[model::Layer::hidden1] = gaussian({4, 7}, rng);
      tracker.means[model::Layer::latent] = gaussian({4, 5}, rng);
      tracker.counts.assign(4, 3);
      tracker.epoch_stamp = 0;
      const auto targets = detail::random_targets(B, 4, rng);
      auto f = [&](const std::vector<Tensor>& p, std::vector<Tensor>* g) {
        std::map<model::Layer, const Tensor*> hidden{{model::Layer::hidden1, &p[0]}, {model::Layer::latent, &p[1]}};
        auto l = losses::loss_mean(hidden, targets, tracker, 0.5);
        if (g) {
          (*g)[0] = l.grads.at(model::Layer::hidden1);
          (*g)[1] = l.grads.at(model::Layer::latent);
        }
        return nn::Evaluation{l.value, 0};
      };
      detail::merge(summary, "L_mean",
                    nn::finite_difference_check(f, {gaussian({B, 7}, rng), gaussian({B, 5}, rng)},
                                                {"hidden1", "latent"}, opts));
    }
    for (bool roi_layer : {true, false}) {  // full decoder
      const data::Atlas atlas = detail::toy_atlas();
      const auto cfg = detail::toy_model_config(roi_layer);
      model::BrainDecoder base = model::build_model(cfg, atlas, rng);
      visit_tensors(base, [&](const std::string& name, Tensor& t, bool trainable) {
        if (!trainable) return;
        std::normal_distribution<double> g(0.0, 0.1);
        for (double& v : t.values) v += g(rng);  // move off zero bias / unit gain
        (void)name;
      });
      const Tensor input = gaussian({B, atlas.total_voxels}, rng);
      const Tensor emb = gaussian({4, 4}, rng);
      auto targets = detail::random_targets(B, 4, rng);
      losses::MeanTracker tracker;
      tracker.means[model::Layer::hidden1] = gaussian({4, 7}, rng);
      tracker.means[model::Layer::latent] = gaussian({4, 5}, rng);
      tracker.counts.assign(4, 2);
      tracker.epoch_stamp = 0;
      const losses::LossContext ctx{&emb, &tracker, {model::Layer::hidden1, model::Layer::latent}};
      const losses::LossWeights weights{1.0, 1.0, 1.0, 0.5, 0.5};
      const std::uint64_t drop_seed = rng();

      std::vector<Tensor> point;
      std::vector<std::string> names;
      for (auto& p : model::trainable_params(base)) {
        point.push_back(*p.tensor);
        names.push_back(p.name);
      }
      auto f = [&](const std::vector<Tensor>& p, std::vector<Tensor>* g) {
        model::BrainDecoder m = base;
        auto params = model::trainable_params(m);
        for (std::size_t i = 0; i < params.size(); ++i) *params[i].tensor = p[i];
        Rng dr(drop_seed);
        const auto acts = model::forward(m, input, nn::Mode::train, dr);
        const auto loss = losses::total_loss(acts, targets, ctx, weights, {.supervised = true, .mean_active = true});
        std::uint64_t fp = 1469598103934665603ull;
        for (const auto* c : {&acts.cache.hidden1, &acts.cache.latent, &acts.cache.class_hidden,
                              &acts.cache.enc_hidden1, &acts.cache.enc_concat})
          fp = nn::sign_fingerprint(c->pre_activation, fp);
        if (g) {
          model::BrainDecoder grads = model::zero_grads(m);
          model::backward(m, acts, loss.grads, grads);
          auto gp = model::trainable_params(grads);
          for (std::size_t i = 0; i < gp.size(); ++i) (*g)[i] = *gp[i].tensor;
        }
        return nn::Evaluation{loss.report.total, fp};
      };
      detail::merge(summary, roi_layer ? "decoder_roi" : "decoder_flat",
                    nn::finite_difference_check(f, point, names, composite));
    }
  }
  return summary;
}

}  // namespace neurodec::checks
