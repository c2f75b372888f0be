#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

#include "neurodec/data/splits.hpp"
#include "neurodec/losses.hpp"
#include "neurodec/nn/optimizer.hpp"

namespace neurodec::training {

using model::BrainDecoder;
using model::Layer;

enum class MonitoredMetric { val_total_loss, val_top1 };
enum class Phase { pretrain, phase1, phase2 };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::pretrain: return "pretrain";
    case Phase::phase1: return "phase1";
    case Phase::phase2: return "phase2";
  }
  return "?";
}

inline const char* to_string(MonitoredMetric m) {
  return m == MonitoredMetric::val_top1 ? "val_top1" : "val_total_loss";
}

struct TrainConfig {
  int pretrain_epochs = 30;
  int batch_size = 32;
  int max_epochs = 300;
  int saturation_patience = 5;
  int early_stop_patience = 10;
  MonitoredMetric monitored_metric = MonitoredMetric::val_total_loss;
  std::vector<Layer> tracked_layers{Layer::hidden1, Layer::latent};
  bool per_paradigm_means = false;
  // Hold the monitoring subject's word scans out of gradient updates.
  bool holdout_monitor_subject = true;
  std::uint64_t seed = 0;
  nn::AdamConfig optimizer;
};

inline void validate(const TrainConfig& c) {
  require(c.saturation_patience >= 1 && c.early_stop_patience >= 1, ErrorKind::config, "patiences must be >= 1");
  require(c.pretrain_epochs >= 0 && c.max_epochs >= 0, ErrorKind::config, "epoch counts must be >= 0");
  require(c.batch_size >= 2, ErrorKind::config, "batch_size must be >= 2 (batch norm needs two samples)");
}

struct TrainLogEntry {
  int epoch = 0;
  Phase phase = Phase::phase1;
  losses::LossReport train_loss;  // mean per scan over the epoch
  double val_metric = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  int tracker_stamp = -1;  // epoch whose means L_mean used, -1 when inactive
};

// key=value record, one line per entry.
inline void write_log_entry(std::ostream& out, const TrainLogEntry& e) {
  out << "epoch=" << e.epoch << " phase=" << to_string(e.phase);
  for (const auto& [k, v] : e.train_loss.terms) out << ' ' << k << '=' << text::format_double(v);
  out << " total=" << text::format_double(e.train_loss.total) << " val_metric=" << text::format_double(e.val_metric)
      << " tracker_stamp=" << e.tracker_stamp << " seconds=" << text::format_double(e.seconds) << '\n';
}

struct TrainResult {
  BrainDecoder model;
  std::vector<TrainLogEntry> log;
  int best_epoch = 0;  // 0: the initial model
  double best_metric = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
};

// --- helpers ------------------------------------------------------------------------

namespace detail {

inline std::vector<int> targets_of(std::span<const data::Scan* const> scans, bool per_paradigm, int n_paradigms) {
  std::vector<int> t;
  t.reserve(scans.size());
  for (const auto* s : scans) {
    require(s->word_index.has_value(), ErrorKind::data, "supervised scan without a word label");
    t.push_back(per_paradigm ? *s->word_index * n_paradigms + s->paradigm.value_or(0) : *s->word_index);
  }
  return t;
}

inline int paradigm_count(std::span<const data::Scan* const> scans) {
  int p = 0;
  for (const auto* s : scans) p = std::max(p, s->paradigm.value_or(0) + 1);
  return std::max(p, 1);
}

// Shuffled batches; a trailing batch of one joins its predecessor.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t i = 0; i < n; i += bs)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + bs)));
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

inline void apply_step(BrainDecoder& m, BrainDecoder& grads, nn::OptimizerState& opt) {
  std::vector<Tensor*> params, gs;
  for (auto& p : model::trainable_params(m)) params.push_back(p.tensor);
  for (auto& g : model::trainable_params(grads)) gs.push_back(g.tensor);
  std::vector<const Tensor*> cgs(gs.begin(), gs.end());
  nn::optimizer_step(opt, params, cgs);
}

inline void accumulate_report(losses::LossReport& acc, const losses::LossReport& r) {
  acc.total += r.total;
  for (const auto& [k, v] : r.terms) acc.terms[k] += v;
}

inline void scale_report(losses::LossReport& r, double s) {
  r.total *= s;
  for (auto& [k, v] : r.terms) v *= s;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// --- pretraining -------------------------------------------------------------------

// Reconstruction-only epochs over unlabeled sentence scans. Heads see no
// gradient, so their parameters stay bitwise unchanged.
inline TrainResult pretrain(BrainDecoder model, std::span<const data::Scan* const> sentence_scans,
                            const TrainConfig& cfg, Rng& rng, int epoch_offset = 0) {
  validate(cfg);
  TrainResult r;
  if (cfg.pretrain_epochs > 0)
    require(model.encoder.has_value(), ErrorKind::config, "pretraining requires the autoencoder");
  if (cfg.pretrain_epochs > 0 && sentence_scans.size() < 2) {
    r.warnings.push_back("pretraining skipped: fewer than two sentence scans");
    r.model = std::move(model);
    return r;
  }
  const Tensor inputs = data::assemble_inputs(sentence_scans, model.atlas);
  nn::OptimizerState opt;
  opt.config = cfg.optimizer;
  losses::LossWeights rec_only{0.0, 0.0, 1.0, 0.0, 1.0};
  for (int e = 1; e <= cfg.pretrain_epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainLogEntry entry;
    entry.epoch = epoch_offset + e;
    entry.phase = Phase::pretrain;
    for (const auto& batch : detail::make_batches(sentence_scans.size(), cfg.batch_size, rng)) {
      auto acts = model::forward(model, select_rows(inputs, batch), nn::Mode::train, rng);
      auto loss = losses::total_loss(acts, {}, {}, rec_only, {.supervised = false, .mean_active = false});
      BrainDecoder grads = model::zero_grads(model);
      model::backward(model, acts, loss.grads, grads);
      detail::apply_step(model, grads, opt);
      detail::accumulate_report(entry.train_loss, loss.report);
    }
    detail::scale_report(entry.train_loss, 1.0 / static_cast<double>(sentence_scans.size()));
    entry.seconds = detail::seconds_since(t0);
    r.log.push_back(entry);
  }
  r.model = std::move(model);
  r.best_epoch = epoch_offset + cfg.pretrain_epochs;
  return r;
}

// Mean reconstruction loss per scan, infer mode.
inline double mean_reconstruction_loss(BrainDecoder& model, std::span<const data::Scan* const> scans) {
  require(model.encoder.has_value(), ErrorKind::config, "model has no autoencoder");
  auto acts = model::infer(model, scans);
  return losses::loss_rec(*acts.reconstruction, acts.reconstruction_target).value / static_cast<double>(scans.size());
}

// --- mean tracker -------------------------------------------------------------------

inline losses::MeanTracker update_mean_tracker(BrainDecoder& model, std::span<const data::Scan* const> word_scans,
                                               const std::vector<Layer>& layers, int epoch_stamp = 0,
                                               bool per_paradigm = false, int n_paradigms = 1,
                                               const data::Vocabulary* vocab = nullptr) {
  const auto rows = static_cast<std::size_t>(model.config.vocab_size * (per_paradigm ? n_paradigms : 1));
  losses::MeanTracker tracker;
  tracker.epoch_stamp = epoch_stamp;
  tracker.counts.assign(rows, 0);
  const auto targets = detail::targets_of(word_scans, per_paradigm, n_paradigms);
  for (int t : targets) {
    require(t >= 0 && static_cast<std::size_t>(t) < rows, ErrorKind::range, "word index outside the model vocabulary");
    ++tracker.counts[static_cast<std::size_t>(t)];
  }
  for (std::size_t i = 0; i < rows; ++i)
    if (tracker.counts[i] == 0) {
      const std::size_t w = per_paradigm ? i / static_cast<std::size_t>(n_paradigms) : i;
      const std::string name = vocab && w < vocab->size() ? vocab->words[w] : "#" + std::to_string(w);
      fail(ErrorKind::tracker_state, "word '" + name + "' has no training scans");
    }
  const auto acts = model::infer(model, word_scans);
  for (Layer l : layers) {
    const Tensor& h = acts.layer(l);
    Tensor means = Tensor::matrix(rows, h.cols());
    for (std::size_t n = 0; n < h.rows(); ++n) {
      auto dst = means.row(static_cast<std::size_t>(targets[n]));
      const auto src = h.row(n);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    for (std::size_t i = 0; i < rows; ++i)
      for (double& v : means.row(i)) v /= static_cast<double>(tracker.counts[i]);
    tracker.means[l] = std::move(means);
  }
  return tracker;
}

// --- supervised training -------------------------------------------------------------

struct SupervisedData {
  std::span<const data::Scan* const> train;    // gradient updates and tracker means
  std::span<const data::Scan* const> monitor;  // early stopping / phase switch
  const Tensor* embeddings = nullptr;          // [v x d] for L_reg
  const data::Vocabulary* vocabulary = nullptr;
};

// Supervised monitoring value. Loss: mean per scan of the weighted reg/class/rec
// terms (L_mean excluded so values compare across phases). Top-1: accuracy.
inline double monitor_metric(BrainDecoder& model, std::span<const data::Scan* const> scans, const Tensor* embeddings,
                             const losses::LossWeights& w, MonitoredMetric metric) {
  auto acts = model::infer(model, scans);
  const auto targets = detail::targets_of(scans, false, 1);
  if (metric == MonitoredMetric::val_top1) {
    require(acts.class_probs.has_value(), ErrorKind::config, "val_top1 monitoring needs the classification head");
    std::size_t hits = 0;
    for (std::size_t n = 0; n < scans.size(); ++n)
      if (model::topk_from_probs(acts.class_probs->row(n), 1).front().word_index == targets[n]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(scans.size());
  }
  losses::LossContext ctx{embeddings, nullptr, {}};
  losses::LossWeights no_mean = w;
  no_mean.w_mean = 0.0;
  if (no_mean.w_reg == 0.0 && no_mean.w_class == 0.0 && no_mean.w_rec == 0.0) no_mean.w_rec = 1.0;
  auto r = losses::total_loss(acts, targets, ctx, no_mean, {.supervised = true, .mean_active = false});
  return r.report.total / static_cast<double>(scans.size());
}

// Phase 1 trains without L_mean until the monitored metric stalls for
// saturation_patience epochs; phase 2 adds L_mean against per-epoch means
// until it stalls for early_stop_patience epochs. Returns the best
// checkpoint seen (the initial model if no epoch improves on it).
inline TrainResult train_supervised(BrainDecoder model, const SupervisedData& data, const TrainConfig& cfg,
                                    const losses::LossWeights& weights, Rng& rng, int epoch_offset = 0) {
  validate(cfg);
  require(!data.train.empty(), ErrorKind::config, "empty training set");
  TrainResult r;
  r.model = model;
  if (cfg.max_epochs == 0) return r;
  require(!data.monitor.empty(), ErrorKind::config, "no monitoring scans for early stopping");

  const bool higher_better = cfg.monitored_metric == MonitoredMetric::val_top1;
  const bool mean_enabled = weights.w_mean > 0.0 && !cfg.tracked_layers.empty();
  const int n_paradigms = detail::paradigm_count(data.train);
  const Tensor inputs = data::assemble_inputs(data.train, model.atlas);
  const auto targets = detail::targets_of(data.train, false, 1);
  const auto tracker_targets = detail::targets_of(data.train, cfg.per_paradigm_means, n_paradigms);

  nn::OptimizerState opt;
  opt.config = cfg.optimizer;
  Phase phase = Phase::phase1;
  losses::MeanTracker tracker;
  double best = higher_better ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  int stale = 0;

  for (int e = 1; e <= cfg.max_epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainLogEntry entry;
    entry.epoch = epoch_offset + e;
    entry.phase = phase;
    entry.tracker_stamp = phase == Phase::phase2 ? tracker.epoch_stamp : -1;
    losses::LossContext ctx{data.embeddings, phase == Phase::phase2 ? &tracker : nullptr, cfg.tracked_layers};
    for (const auto& batch : detail::make_batches(data.train.size(), cfg.batch_size, rng)) {
      std::vector<int> bt, btt;
      for (std::size_t i : batch) {
        bt.push_back(targets[i]);
        btt.push_back(tracker_targets[i]);
      }
      auto acts = model::forward(model, select_rows(inputs, batch), nn::Mode::train, rng);
      const losses::PhaseFlags flags{.supervised = true, .mean_active = phase == Phase::phase2};
      // L_mean indexes the tracker rows, which may be per (word, paradigm).
      auto loss = losses::total_loss(acts, bt, ctx, weights, {.supervised = true, .mean_active = false});
      if (flags.mean_active) {
        losses::LossWeights only_mean{0.0, 0.0, 0.0, weights.w_mean, weights.neg_term_scale};
        auto mean_part = losses::total_loss(acts, btt, ctx, only_mean, flags);
        loss.report.terms["mean"] = mean_part.report.terms["mean"];
        loss.report.total += mean_part.report.total;
        loss.grads.roi_concat = std::move(mean_part.grads.roi_concat);
        loss.grads.hidden1 = std::move(mean_part.grads.hidden1);
        loss.grads.latent = std::move(mean_part.grads.latent);
      }
      BrainDecoder grads = model::zero_grads(model);
      model::backward(model, acts, loss.grads, grads);
      detail::apply_step(model, grads, opt);
      detail::accumulate_report(entry.train_loss, loss.report);
    }
    detail::scale_report(entry.train_loss, 1.0 / static_cast<double>(data.train.size()));

    if (phase == Phase::phase2)
      tracker = update_mean_tracker(model, data.train, cfg.tracked_layers, epoch_offset + e, cfg.per_paradigm_means,
                                    n_paradigms, data.vocabulary);

    entry.val_metric = monitor_metric(model, data.monitor, data.embeddings, weights, cfg.monitored_metric);
    entry.seconds = detail::seconds_since(t0);
    r.log.push_back(entry);

    const bool improved = higher_better ? entry.val_metric > best : entry.val_metric < best;
    if (improved) {
      best = entry.val_metric;
      r.model = model;
      r.best_epoch = entry.epoch;
      r.best_metric = best;
      stale = 0;
    } else {
      ++stale;
    }

    if (phase == Phase::phase1 && mean_enabled) {
      if (stale >= cfg.saturation_patience) {
        phase = Phase::phase2;
        tracker = update_mean_tracker(model, data.train, cfg.tracked_layers, epoch_offset + e, cfg.per_paradigm_means,
                                      n_paradigms, data.vocabulary);
        stale = 0;
      }
    } else if (stale >= cfg.early_stop_patience) {
      break;
    }
  }
  return r;
}

// --- leave-one-subject-out driver ----------------------------------------------------------

struct RotationResult {
  std::string test_subject;
  std::string monitor_subject;
  std::vector<std::string> gradient_subjects;  // provenance: subjects whose scans drove updates
  TrainResult training;
  std::vector<const data::Scan*> test_scans;
};

struct LeaveOneOutOptions {
  std::string validation_subject;
  int parallel_rotations = 1;
  std::vector<std::string> only_test_subjects;  // empty: every rotation
  bool include_validation_rotation = false;
};

// Trains one split: optional pretraining on sentence scans of the training
// subjects, then supervised training. The test subject's scans are never
// touched; the monitoring subject's word scans are used only for monitoring
// when cfg.holdout_monitor_subject is set.
inline RotationResult train_rotation(const data::Dataset& ds, const data::Split& split,
                                     const std::string& monitor_subject, const model::ModelConfig& mcfg,
                                     const TrainConfig& cfg, const losses::LossWeights& weights,
                                     std::uint64_t seed) {
  require(!split.train_subjects.empty(), ErrorKind::config, "split has no training subjects");
  require(std::find(split.train_subjects.begin(), split.train_subjects.end(), split.test_subject) ==
              split.train_subjects.end(),
          ErrorKind::invariant, "test subject appears in its own training set");
  if (mcfg.regression_head)
    require(static_cast<std::size_t>(mcfg.embedding_dim) == ds.embeddings.dimension(), ErrorKind::config,
            "model embedding_dim differs from the dataset embeddings");
  require(static_cast<std::size_t>(mcfg.vocab_size) == ds.vocabulary.size(), ErrorKind::config,
          "model vocab_size differs from the dataset vocabulary");

  RotationResult out;
  out.test_subject = split.test_subject;
  out.monitor_subject = monitor_subject;
  for (const auto& s : split.train_subjects)
    if (!(cfg.holdout_monitor_subject && s == monitor_subject)) out.gradient_subjects.push_back(s);

  const auto train_words = data::scans_of(ds.word_scans, out.gradient_subjects);
  const auto monitor_words = cfg.holdout_monitor_subject ? data::scans_of(ds.word_scans, {monitor_subject})
                                                         : train_words;
  const auto sentences = data::scans_of(ds.sentence_scans, split.train_subjects);
  out.test_scans = data::scans_of(ds.word_scans, {split.test_subject});

  Rng rng(seed);
  BrainDecoder m = model::build_model(mcfg, ds.atlas, rng);
  int offset = 0;
  std::vector<TrainLogEntry> log;
  std::vector<std::string> warnings;
  if (cfg.pretrain_epochs > 0) {
    auto pre = pretrain(std::move(m), sentences, cfg, rng);
    m = std::move(pre.model);
    log = std::move(pre.log);
    warnings = std::move(pre.warnings);
    offset = static_cast<int>(log.size());
  }
  const Tensor emb = data::embedding_matrix(ds.embeddings, ds.vocabulary);
  SupervisedData sd{train_words, monitor_words, &emb, &ds.vocabulary};
  out.training = train_supervised(std::move(m), sd, cfg, weights, rng, offset);
  log.insert(log.end(), out.training.log.begin(), out.training.log.end());
  out.training.log = std::move(log);
  out.training.warnings.insert(out.training.warnings.begin(), warnings.begin(), warnings.end());
  return out;
}

// Subject used for monitoring when `test` is held out.
inline std::string monitor_subject_for(const std::vector<std::string>& subjects, const std::string& validation,
                                       const std::string& test) {
  if (test != validation) return validation;
  for (auto it = subjects.rbegin(); it != subjects.rend(); ++it)
    if (*it != test) return *it;
  fail(ErrorKind::config, "need at least two subjects");
}

// One rotation per non-validation subject, each from a fresh initialization
// seeded with cfg.seed XOR rotation index. Rotations are independent and may
// run on several threads; results come back in rotation order.
inline std::vector<RotationResult> run_leave_one_out(const data::Dataset& ds, const TrainConfig& cfg,
                                                     const losses::LossWeights& weights,
                                                     const model::ModelConfig& mcfg,
                                                     const LeaveOneOutOptions& opts) {
  const auto subjects = ds.subjects();
  require(subjects.size() >= 2, ErrorKind::config, "leave-one-out needs at least two subjects");
  const auto plan = data::leave_one_out_splits(subjects, opts.validation_subject);
  std::vector<std::pair<std::size_t, data::Split>> jobs;
  for (std::size_t i = 0; i < plan.rotations.size(); ++i) {
    const auto& t = plan.rotations[i].test_subject;
    if (opts.only_test_subjects.empty() ||
        std::find(opts.only_test_subjects.begin(), opts.only_test_subjects.end(), t) != opts.only_test_subjects.end())
      jobs.emplace_back(i, plan.rotations[i]);
  }
  if (opts.include_validation_rotation) jobs.emplace_back(plan.rotations.size(), plan.validation);

  std::vector<RotationResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        const auto& [index, split] = jobs[j];
        const auto monitor = monitor_subject_for(subjects, opts.validation_subject, split.test_subject);
        results[j] = train_rotation(ds, split, monitor, mcfg, cfg, weights, cfg.seed ^ static_cast<std::uint64_t>(index));
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(opts.parallel_rotations, 1, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace neurodec::training
