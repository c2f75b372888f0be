#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "neurodec/data/dataset.hpp"
#include "neurodec/nn/layers.hpp"

namespace neurodec::model {

enum class Layer { roi_concat, hidden1, latent };

inline const char* to_string(Layer l) {
  switch (l) {
    case Layer::roi_concat: return "roi_concat";
    case Layer::hidden1: return "hidden1";
    case Layer::latent: return "latent";
  }
  return "?";
}

struct ModelConfig {
  int roi_divisor = 20;
  int hidden1_size = 2000;
  int latent_size = 200;
  double dropout_rate = 0.4;
  double leaky_alpha = 0.3;
  int embedding_dim = 300;
  int vocab_size = 180;
  bool regression_head = false;
  bool classification_head = true;
  bool autoencoder = true;
  bool use_roi_layer = true;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;
};

inline void validate(const ModelConfig& c) {
  require(c.roi_divisor >= 1 && c.hidden1_size >= 1 && c.latent_size >= 1 && c.embedding_dim >= 1 &&
              c.vocab_size >= 1,
          ErrorKind::config, "model sizes must be >= 1");
  require(c.regression_head || c.classification_head, ErrorKind::config, "at least one head must be enabled");
  require(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0, ErrorKind::config, "dropout_rate must be in [0,1)");
  require(c.leaky_alpha >= 0.0, ErrorKind::config, "leaky_alpha must be >= 0");
  require(c.bn_momentum > 0.0 && c.bn_momentum < 1.0 && c.bn_epsilon > 0.0, ErrorKind::config,
          "batch-norm momentum must be in (0,1) and epsilon > 0");
}

// dropout -> dense -> batch norm -> leaky ReLU
struct NonLinearBlock {
  nn::DenseParams dense;
  nn::BatchNormParams bn;
};

struct Encoder {
  NonLinearBlock hidden1;                // latent -> hidden1
  std::optional<NonLinearBlock> concat;  // hidden1 -> ROI concat width (ROI mode only)
  // ROI mode: one linear layer per ROI, from that ROI's concat slice to its
  // voxel count. Otherwise a single linear layer hidden1 -> covered voxels.
  std::vector<nn::DenseParams> outputs;
};

struct BrainDecoder {
  ModelConfig config;
  data::Atlas atlas;
  std::vector<nn::DenseParams> roi_layers;
  NonLinearBlock hidden1;
  NonLinearBlock latent;
  std::optional<nn::DenseParams> regression;
  std::optional<NonLinearBlock> class_hidden;
  std::optional<nn::DenseParams> class_output;
  std::optional<Encoder> encoder;
};

inline std::size_t roi_output_width(std::size_t roi_size, int divisor) {
  return std::max<std::size_t>(roi_size / static_cast<std::size_t>(divisor), 1);
}

inline std::size_t roi_concat_width(const ModelConfig& cfg, const data::Atlas& atlas) {
  if (!cfg.use_roi_layer) return atlas.covered_count();
  std::size_t w = 0;
  for (const auto& r : atlas.rois) w += roi_output_width(r.voxel_indices.size(), cfg.roi_divisor);
  return w;
}

namespace detail {

inline NonLinearBlock make_block(std::size_t in, std::size_t out, const ModelConfig& cfg, Rng& rng) {
  return {nn::make_dense(in, out, rng), nn::make_batch_norm(out, cfg.bn_momentum, cfg.bn_epsilon)};
}

}  // namespace detail

inline BrainDecoder build_model(const ModelConfig& cfg, const data::Atlas& atlas, Rng& rng) {
  validate(cfg);
  data::validate(atlas);
  BrainDecoder m;
  m.config = cfg;
  m.atlas = atlas;
  const auto H = static_cast<std::size_t>(cfg.hidden1_size);
  const auto L = static_cast<std::size_t>(cfg.latent_size);
  const auto E = static_cast<std::size_t>(cfg.embedding_dim);
  if (cfg.use_roi_layer)
    for (const auto& r : atlas.rois) {
      const std::size_t n = r.voxel_indices.size();
      m.roi_layers.push_back(nn::make_dense(n, roi_output_width(n, cfg.roi_divisor), rng));
    }
  const std::size_t concat = roi_concat_width(cfg, atlas);
  m.hidden1 = detail::make_block(concat, H, cfg, rng);
  m.latent = detail::make_block(H, L, cfg, rng);
  if (cfg.regression_head) m.regression = nn::make_dense(L, E, rng);
  if (cfg.classification_head) {
    m.class_hidden = detail::make_block(L, E, cfg, rng);
    m.class_output = nn::make_dense(E, static_cast<std::size_t>(cfg.vocab_size), rng);
  }
  if (cfg.autoencoder) {
    Encoder enc;
    enc.hidden1 = detail::make_block(L, H, cfg, rng);
    if (cfg.use_roi_layer) {
      enc.concat = detail::make_block(H, concat, cfg, rng);
      for (const auto& r : atlas.rois) {
        const std::size_t n = r.voxel_indices.size();
        enc.outputs.push_back(nn::make_dense(roi_output_width(n, cfg.roi_divisor), n, rng));
      }
    } else {
      enc.outputs.push_back(nn::make_dense(H, atlas.covered_count(), rng));
    }
    m.encoder = std::move(enc);
  }
  return m;
}

// Visits every tensor of the model in a fixed order as f(name, tensor, trainable).
// Batch-norm running statistics are visited with trainable == false.
template <class Model, class F>
void visit_tensors(Model& m, F&& f) {
  const auto dense = [&](const std::string& name, auto& d) {
    f(name + ".weights", d.weights, true);
    f(name + ".bias", d.bias, true);
  };
  const auto block = [&](const std::string& name, auto& b) {
    dense(name + ".dense", b.dense);
    f(name + ".bn.gain", b.bn.gain, true);
    f(name + ".bn.shift", b.bn.shift, true);
    f(name + ".bn.running_mean", b.bn.running_mean, false);
    f(name + ".bn.running_var", b.bn.running_var, false);
  };
  for (std::size_t r = 0; r < m.roi_layers.size(); ++r) dense("roi." + m.atlas.rois[r].name, m.roi_layers[r]);
  block("hidden1", m.hidden1);
  block("latent", m.latent);
  if (m.regression) dense("regression", *m.regression);
  if (m.class_hidden) block("class_hidden", *m.class_hidden);
  if (m.class_output) dense("class_output", *m.class_output);
  if (m.encoder) {
    block("encoder.hidden1", m.encoder->hidden1);
    if (m.encoder->concat) block("encoder.concat", *m.encoder->concat);
    for (std::size_t r = 0; r < m.encoder->outputs.size(); ++r)
      dense(m.config.use_roi_layer ? "encoder.out." + m.atlas.rois[r].name : std::string("encoder.out"),
            m.encoder->outputs[r]);
  }
}

struct ParamRef {
  std::string name;
  Tensor* tensor;
};

inline std::vector<ParamRef> trainable_params(BrainDecoder& m) {
  std::vector<ParamRef> out;
  visit_tensors(m, [&](const std::string& name, Tensor& t, bool trainable) {
    if (trainable) out.push_back({name, &t});
  });
  return out;
}

// Same structure, every tensor zeroed; used as the gradient accumulator.
inline BrainDecoder zero_grads(const BrainDecoder& m) {
  BrainDecoder g = m;
  visit_tensors(g, [](const std::string&, Tensor& t, bool) { std::fill(t.values.begin(), t.values.end(), 0.0); });
  return g;
}

// --- forward ---------------------------------------------------------------------

struct BlockCache {
  Tensor dropped;       // dropout output, the dense input
  Tensor mask;          // dropout scale per element
  nn::BatchNormCache bn;
  Tensor pre_activation;  // batch-norm output
};

struct ForwardCache {
  std::vector<Tensor> roi_inputs;  // per ROI gathered voxels (ROI mode)
  BlockCache hidden1, latent, class_hidden, enc_hidden1, enc_concat;
  Tensor enc_hidden1_out;
  Tensor enc_concat_out;
  nn::Mode mode = nn::Mode::infer;
};

struct ForwardActivations {
  Tensor roi_concat;
  Tensor hidden1;
  Tensor latent;
  std::optional<Tensor> regression_out;
  std::optional<Tensor> logits;
  std::optional<Tensor> class_probs;
  std::optional<Tensor> reconstruction;
  Tensor reconstruction_target;  // ROI-covered slice of the input, ROI order
  ForwardCache cache;

  const Tensor& layer(Layer l) const {
    switch (l) {
      case Layer::roi_concat: return roi_concat;
      case Layer::hidden1: return hidden1;
      case Layer::latent: return latent;
    }
    return latent;
  }
};

namespace detail {

inline Tensor block_forward(NonLinearBlock& b, const Tensor& x, const ModelConfig& cfg, nn::Mode mode, Rng& rng,
                            BlockCache& cache) {
  cache.dropped = nn::dropout(x, cfg.dropout_rate, rng, mode, &cache.mask);
  Tensor z = nn::dense_apply(b.dense, cache.dropped);
  cache.pre_activation = nn::batch_norm(z, b.bn, mode, &cache.bn);
  return nn::leaky_relu(cache.pre_activation, cfg.leaky_alpha);
}

inline Tensor block_backward(const NonLinearBlock& b, const BlockCache& cache, const Tensor& grad_out,
                             const ModelConfig& cfg, NonLinearBlock& grads) {
  Tensor g = nn::leaky_relu_backward(cache.pre_activation, grad_out, cfg.leaky_alpha);
  g = nn::batch_norm_backward(b.bn, cache.bn, g, grads.bn);
  g = nn::dense_backward(b.dense, cache.dropped, g, grads.dense);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= cache.mask[i];
  return g;
}

}  // namespace detail

// `input` is an assembled batch [batch x total_voxels] (see data::assemble_inputs).
// Batch-norm running statistics are updated in train mode, hence the
// non-const model.
inline ForwardActivations forward(BrainDecoder& m, const Tensor& input, nn::Mode mode, Rng& rng) {
  const auto& cfg = m.config;
  require(input.rank() == 2 && input.cols() == m.atlas.total_voxels, ErrorKind::size,
          "forward expects [batch x " + std::to_string(m.atlas.total_voxels) + "] input, got " +
              input.shape_string());
  ForwardActivations a;
  a.cache.mode = mode;
  const auto covered = m.atlas.covered_indices();
  a.reconstruction_target = gather_columns(input, covered);

  if (cfg.use_roi_layer) {
    std::vector<Tensor> parts;
    parts.reserve(m.roi_layers.size());
    for (std::size_t r = 0; r < m.roi_layers.size(); ++r) {
      a.cache.roi_inputs.push_back(gather_columns(input, m.atlas.rois[r].voxel_indices));
      parts.push_back(nn::dense_apply(m.roi_layers[r], a.cache.roi_inputs.back()));
    }
    a.roi_concat = concat_columns(parts);
  } else {
    a.roi_concat = a.reconstruction_target;
  }

  a.hidden1 = detail::block_forward(m.hidden1, a.roi_concat, cfg, mode, rng, a.cache.hidden1);
  a.latent = detail::block_forward(m.latent, a.hidden1, cfg, mode, rng, a.cache.latent);

  if (m.regression) a.regression_out = nn::dense_apply(*m.regression, a.latent);
  if (m.class_hidden) {
    Tensor h = detail::block_forward(*m.class_hidden, a.latent, cfg, mode, rng, a.cache.class_hidden);
    a.logits = nn::dense_apply(*m.class_output, h);
    a.class_probs = nn::softmax(*a.logits);
  }
  if (m.encoder) {
    auto& enc = *m.encoder;
    a.cache.enc_hidden1_out = detail::block_forward(enc.hidden1, a.latent, cfg, mode, rng, a.cache.enc_hidden1);
    if (enc.concat) {
      a.cache.enc_concat_out =
          detail::block_forward(*enc.concat, a.cache.enc_hidden1_out, cfg, mode, rng, a.cache.enc_concat);
      std::vector<Tensor> parts;
      std::size_t offset = 0;
      for (std::size_t r = 0; r < enc.outputs.size(); ++r) {
        const std::size_t w = enc.outputs[r].in();
        parts.push_back(nn::dense_apply(enc.outputs[r], slice_columns(a.cache.enc_concat_out, offset, w)));
        offset += w;
      }
      a.reconstruction = concat_columns(parts);
    } else {
      a.reconstruction = nn::dense_apply(enc.outputs.front(), a.cache.enc_hidden1_out);
    }
  }
  return a;
}

inline ForwardActivations forward(BrainDecoder& m, std::span<const data::Scan* const> scans, nn::Mode mode,
                                  Rng& rng) {
  for (const auto* s : scans)
    require(s->voxels.size() == m.atlas.total_voxels, ErrorKind::size,
            "scan of subject " + s->subject_id + " has " + std::to_string(s->voxels.size()) +
                " voxels; pad to " + std::to_string(m.atlas.total_voxels) + " first");
  return forward(m, data::assemble_inputs(scans, m.atlas), mode, rng);
}

// Upstream gradients with respect to activations; empty tensors contribute nothing.
struct ActivationGrads {
  Tensor roi_concat;
  Tensor hidden1;
  Tensor latent;
  Tensor regression_out;
  Tensor logits;
  Tensor reconstruction;
};

namespace detail {

inline void accumulate(Tensor& dst, const Tensor& src) {
  if (src.size() == 0) return;
  if (dst.size() == 0)
    dst = src;
  else
    add_inplace(dst, src);
}

}  // namespace detail

// Backward pass through a train-mode forward. Accumulates into `grads`
// (a zero_grads() clone of the model).
inline void backward(const BrainDecoder& m, const ForwardActivations& a, const ActivationGrads& up,
                     BrainDecoder& grads) {
  require(a.cache.mode == nn::Mode::train, ErrorKind::contract, "backward requires a train-mode forward pass");
  const auto& cfg = m.config;
  Tensor d_latent = up.latent;

  if (m.encoder && up.reconstruction.size() > 0) {
    const auto& enc = *m.encoder;
    auto& genc = *grads.encoder;
    Tensor d_enc_h1;
    if (enc.concat) {
      Tensor d_concat_out = Tensor::matrix(a.cache.enc_concat_out.rows(), a.cache.enc_concat_out.cols());
      std::size_t in_off = 0, out_off = 0;
      for (std::size_t r = 0; r < enc.outputs.size(); ++r) {
        const std::size_t w = enc.outputs[r].in();
        const std::size_t n = enc.outputs[r].out();
        Tensor d_in = nn::dense_backward(enc.outputs[r], slice_columns(a.cache.enc_concat_out, in_off, w),
                                         slice_columns(up.reconstruction, out_off, n), genc.outputs[r]);
        for (std::size_t b = 0; b < d_in.rows(); ++b)
          for (std::size_t i = 0; i < w; ++i) d_concat_out(b, in_off + i) = d_in(b, i);
        in_off += w;
        out_off += n;
      }
      d_enc_h1 = detail::block_backward(*enc.concat, a.cache.enc_concat, d_concat_out, cfg, *genc.concat);
    } else {
      d_enc_h1 = nn::dense_backward(enc.outputs.front(), a.cache.enc_hidden1_out, up.reconstruction,
                                    genc.outputs.front());
    }
    detail::accumulate(d_latent, detail::block_backward(enc.hidden1, a.cache.enc_hidden1, d_enc_h1, cfg, genc.hidden1));
  }

  if (m.class_hidden && up.logits.size() > 0) {
    const Tensor h = nn::leaky_relu(a.cache.class_hidden.pre_activation, cfg.leaky_alpha);
    Tensor d_h = nn::dense_backward(*m.class_output, h, up.logits, *grads.class_output);
    detail::accumulate(d_latent,
                       detail::block_backward(*m.class_hidden, a.cache.class_hidden, d_h, cfg, *grads.class_hidden));
  }

  if (m.regression && up.regression_out.size() > 0)
    detail::accumulate(d_latent, nn::dense_backward(*m.regression, a.latent, up.regression_out, *grads.regression));

  Tensor d_hidden1 = up.hidden1;
  if (d_latent.size() > 0)
    detail::accumulate(d_hidden1, detail::block_backward(m.latent, a.cache.latent, d_latent, cfg, grads.latent));

  Tensor d_concat = up.roi_concat;
  if (d_hidden1.size() > 0)
    detail::accumulate(d_concat, detail::block_backward(m.hidden1, a.cache.hidden1, d_hidden1, cfg, grads.hidden1));

  if (cfg.use_roi_layer && d_concat.size() > 0) {
    std::size_t offset = 0;
    for (std::size_t r = 0; r < m.roi_layers.size(); ++r) {
      const std::size_t w = m.roi_layers[r].out();
      nn::dense_backward(m.roi_layers[r], a.cache.roi_inputs[r], slice_columns(d_concat, offset, w),
                         grads.roi_layers[r]);
      offset += w;
    }
  }
}

// --- prediction --------------------------------------------------------------------

struct Prediction {
  int word_index;
  double probability;
};

// Top-k words by probability, ties by ascending index.
inline std::vector<Prediction> topk_from_probs(std::span<const double> probs, int k) {
  require(k >= 1 && static_cast<std::size_t>(k) <= probs.size(), ErrorKind::argument,
          "k must be in [1, " + std::to_string(probs.size()) + "], got " + std::to_string(k));
  std::vector<int> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    const double pa = probs[static_cast<std::size_t>(a)], pb = probs[static_cast<std::size_t>(b)];
    return pa != pb ? pa > pb : a < b;
  });
  std::vector<Prediction> out;
  for (int i = 0; i < k; ++i) out.push_back({idx[static_cast<std::size_t>(i)], probs[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]});
  return out;
}

// Infer-mode forward over many scans at once (batch-size independent).
inline ForwardActivations infer(BrainDecoder& m, std::span<const data::Scan* const> scans) {
  Rng unused(0);
  return forward(m, scans, nn::Mode::infer, unused);
}

inline std::vector<Prediction> predict_topk(BrainDecoder& m, const data::Scan& scan, int k) {
  require(m.class_hidden.has_value(), ErrorKind::config, "predict_topk needs the classification head");
  const data::Scan* one[] = {&scan};
  const auto a = infer(m, one);
  return topk_from_probs(a.class_probs->row(0), k);
}

}  // namespace neurodec::model
