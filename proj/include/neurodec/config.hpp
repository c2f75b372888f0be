#pragma once

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "neurodec/data/synth.hpp"
#include "neurodec/generation/anchoring.hpp"
#include "neurodec/generation/corpus.hpp"
#include "neurodec/training.hpp"

namespace neurodec::config {

struct Paths {
  std::string data_dir;
  std::string out_dir = "out";
  std::string checkpoint;
  std::string corpus;
  std::string embeddings;
};

struct EvalConfig {
  std::string validation_subject;  // empty: last subject in dataset order
  std::vector<int> k_values{1, 5};
  bool pool_paradigms = false;
};

// Everything a run needs. Defaults are the desk-scale settings; the model
// sizes are smaller than the reference architecture to fit a single CPU.
struct RunConfig {
  std::uint64_t seed = 0;
  Paths paths;
  data::SynthConfig synth;
  model::ModelConfig model = desk_model();
  training::TrainConfig train;
  losses::LossWeights loss;
  generation::GenConfig gen;
  generation::NGramOptions ngram;
  generation::CorpusConfig corpus;
  EvalConfig eval;
  int contexts = 10;  // contexts drawn from the corpus by `generate`

  static model::ModelConfig desk_model() {
    model::ModelConfig m;
    m.hidden1_size = 256;
    m.latent_size = 64;
    m.embedding_dim = 32;
    m.vocab_size = 20;
    return m;
  }
};

namespace detail {

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

inline std::string show(bool v) { return v ? "true" : "false"; }
inline std::string show(int v) { return std::to_string(v); }
inline std::string show(std::uint64_t v) { return std::to_string(v); }
inline std::string show(double v) { return text::format_double(v); }
inline std::string show(const std::string& v) { return v; }

inline void read(const std::string& s, bool& v, const std::string& key) {
  if (s == "true") v = true;
  else if (s == "false") v = false;
  else fail(ErrorKind::config, key + ": expected true or false, got '" + s + "'");
}
inline void read(const std::string& s, int& v, const std::string& key) {
  const long long x = text::parse_int(s, key);
  require(x >= INT32_MIN && x <= INT32_MAX, ErrorKind::config, key + ": out of range");
  v = static_cast<int>(x);
}
inline void read(const std::string& s, std::uint64_t& v, const std::string& key) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size(), ErrorKind::config,
          key + ": expected unsigned integer, got '" + s + "'");
}
inline void read(const std::string& s, double& v, const std::string& key) { v = text::parse_double(s, key); }
inline void read(const std::string& s, std::string& v, const std::string&) { v = s; }

template <class T>
Field field(std::string key, T& ref) {
  return {key, [&ref] { return show(ref); }, [&ref, key](const std::string& s) { read(s, ref, key); }};
}

template <class E>
Field enum_field(std::string key, E& ref, std::vector<std::pair<E, std::string>> names) {
  return {key,
          [&ref, names] {
            for (const auto& [e, n] : names)
              if (e == ref) return n;
            return std::string("?");
          },
          [&ref, names, key](const std::string& s) {
            for (const auto& [e, n] : names)
              if (n == s) {
                ref = e;
                return;
              }
            std::string allowed;
            for (const auto& [e, n] : names) allowed += (allowed.empty() ? "" : ", ") + n;
            fail(ErrorKind::config, key + ": expected one of {" + allowed + "}, got '" + s + "'");
          }};
}

inline std::vector<Field> fields(RunConfig& c) {
  using model::Layer;
  std::vector<Field> f = {
      field("seed", c.seed),
      field("paths.data_dir", c.paths.data_dir),
      field("paths.out_dir", c.paths.out_dir),
      field("paths.checkpoint", c.paths.checkpoint),
      field("paths.corpus", c.paths.corpus),
      field("paths.embeddings", c.paths.embeddings),
      field("synth.n_subjects", c.synth.n_subjects),
      field("synth.n_words", c.synth.n_words),
      field("synth.n_paradigms", c.synth.n_paradigms),
      field("synth.total_voxels", c.synth.total_voxels),
      field("synth.n_rois", c.synth.n_rois),
      field("synth.concept_dim", c.synth.concept_dim),
      field("synth.embedding_dim", c.synth.embedding_dim),
      field("synth.sentence_scans_per_subject", c.synth.sentence_scans_per_subject),
      field("synth.signal_to_noise", c.synth.signal_to_noise),
      field("synth.subject_mixing", c.synth.subject_mixing),
      field("synth.paradigm_scale", c.synth.paradigm_scale),
      field("synth.embedding_noise", c.synth.embedding_noise),
      field("model.roi_divisor", c.model.roi_divisor),
      field("model.hidden1_size", c.model.hidden1_size),
      field("model.latent_size", c.model.latent_size),
      field("model.dropout_rate", c.model.dropout_rate),
      field("model.leaky_alpha", c.model.leaky_alpha),
      field("model.embedding_dim", c.model.embedding_dim),
      field("model.vocab_size", c.model.vocab_size),
      field("model.regression_head", c.model.regression_head),
      field("model.classification_head", c.model.classification_head),
      field("model.autoencoder", c.model.autoencoder),
      field("model.use_roi_layer", c.model.use_roi_layer),
      field("model.bn_momentum", c.model.bn_momentum),
      field("model.bn_epsilon", c.model.bn_epsilon),
      field("train.pretrain_epochs", c.train.pretrain_epochs),
      field("train.batch_size", c.train.batch_size),
      field("train.max_epochs", c.train.max_epochs),
      field("train.saturation_patience", c.train.saturation_patience),
      field("train.early_stop_patience", c.train.early_stop_patience),
      enum_field("train.monitored_metric", c.train.monitored_metric,
                 {{training::MonitoredMetric::val_total_loss, "val_total_loss"},
                  {training::MonitoredMetric::val_top1, "val_top1"}}),
      {"train.tracked_layers",
       [&c] {
         std::string s;
         for (auto l : c.train.tracked_layers) s += (s.empty() ? "" : ",") + std::string(model::to_string(l));
         return s;
       },
       [&c](const std::string& s) {
         c.train.tracked_layers.clear();
         for (const auto& part : text::split(s, ',')) {
           const auto name = text::trim(part);
           if (name.empty()) continue;
           bool found = false;
           for (auto l : {Layer::roi_concat, Layer::hidden1, Layer::latent})
             if (name == model::to_string(l)) {
               c.train.tracked_layers.push_back(l);
               found = true;
             }
           require(found, ErrorKind::config, "train.tracked_layers: unknown layer '" + std::string(name) + "'");
         }
       }},
      field("train.per_paradigm_means", c.train.per_paradigm_means),
      field("train.holdout_monitor_subject", c.train.holdout_monitor_subject),
      field("train.learning_rate", c.train.optimizer.learning_rate),
      field("train.beta1", c.train.optimizer.beta1),
      field("train.beta2", c.train.optimizer.beta2),
      field("train.adam_epsilon", c.train.optimizer.epsilon),
      field("loss.w_reg", c.loss.w_reg),
      field("loss.w_class", c.loss.w_class),
      field("loss.w_rec", c.loss.w_rec),
      field("loss.w_mean", c.loss.w_mean),
      field("loss.neg_term_scale", c.loss.neg_term_scale),
      field("gen.tokens_to_generate", c.gen.tokens_to_generate),
      field("gen.topk", c.gen.topk),
      field("gen.runs_per_scan", c.gen.runs_per_scan),
      enum_field("gen.anchor_measure", c.gen.measure,
                 {{generation::AnchorMeasure::similarity, "similarity"},
                  {generation::AnchorMeasure::distance, "distance"}}),
      field("gen.contexts", c.contexts),
      field("ngram.order", c.ngram.order),
      {"ngram.vocab_cap", [&c] { return std::to_string(c.ngram.vocab_cap); },
       [&c](const std::string& s) {
         std::uint64_t v = 0;
         read(s, v, "ngram.vocab_cap");
         c.ngram.vocab_cap = static_cast<std::size_t>(v);
       }},
      field("ngram.additive", c.ngram.additive),
      field("corpus.n_sentences", c.corpus.n_sentences),
      field("corpus.filler_nouns", c.corpus.filler_nouns),
      field("corpus.related_per_word", c.corpus.related_per_word),
      field("corpus.vocabulary_noun_rate", c.corpus.vocabulary_noun_rate),
      field("corpus.name_rate", c.corpus.name_rate),
      field("corpus.related_noise", c.corpus.related_noise),
      field("eval.validation_subject", c.eval.validation_subject),
      {"eval.k",
       [&c] {
         std::string s;
         for (int k : c.eval.k_values) s += (s.empty() ? "" : ",") + std::to_string(k);
         return s;
       },
       [&c](const std::string& s) {
         c.eval.k_values.clear();
         for (const auto& part : text::split(s, ','))
           if (!text::trim(part).empty()) c.eval.k_values.push_back(static_cast<int>(text::parse_int(text::trim(part), "eval.k")));
       }},
      field("eval.pool_paradigms", c.eval.pool_paradigms),
  };
  return f;
}

}  // namespace detail

// The run seed feeds every component; component seeds are not separate keys.
inline void propagate_seed(RunConfig& c) {
  c.synth.seed = c.seed;
  c.train.seed = c.seed;
  c.gen.seed = c.seed;
  c.corpus.seed = c.seed;
}

inline void set_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (auto& f : detail::fields(c))
    if (f.key == key) {
      f.set(value);
      propagate_seed(c);
      return;
    }
  fail(ErrorKind::config, "unknown config key '" + key + "'");
}

inline std::string get_value(RunConfig& c, const std::string& key) {
  for (auto& f : detail::fields(c))
    if (f.key == key) return f.get();
  fail(ErrorKind::config, "unknown config key '" + key + "'");
}

// `key = value` lines; `#` starts a comment; a `[section]` line prefixes the
// following keys with `section.`.
inline void apply_text(RunConfig& c, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const auto t = text::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      require(t.back() == ']', ErrorKind::config, "line " + std::to_string(lineno) + ": unterminated section");
      section = std::string(text::trim(t.substr(1, t.size() - 2)));
      continue;
    }
    const auto eq = t.find('=');
    require(eq != std::string_view::npos, ErrorKind::config, "line " + std::to_string(lineno) + ": expected key = value");
    std::string key(text::trim(t.substr(0, eq)));
    if (!section.empty()) key = section + "." + key;
    set_value(c, key, std::string(text::trim(t.substr(eq + 1))));
  }
}

inline RunConfig load_config(const std::string& path) {
  RunConfig c;
  auto in = text::open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(c, ss.str());
  return c;
}

// Every key in fixed order; parsing the result reproduces the config exactly.
inline std::string serialize(const RunConfig& c) {
  RunConfig copy = c;
  std::string out;
  for (auto& f : detail::fields(copy)) out += f.key + " = " + f.get() + "\n";
  return out;
}

inline void validate(const RunConfig& c) {
  data::validate(c.synth);
  model::validate(c.model);
  training::validate(c.train);
  require(!c.eval.k_values.empty(), ErrorKind::config, "eval.k needs at least one value");
  for (int k : c.eval.k_values) require(k >= 1, ErrorKind::config, "eval.k values must be >= 1");
  require(c.contexts >= 1, ErrorKind::config, "gen.contexts must be >= 1");
}

}  // namespace neurodec::config
