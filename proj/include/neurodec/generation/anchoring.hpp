#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "neurodec/data/dataset.hpp"
#include "neurodec/generation/language_model.hpp"
#include "neurodec/nn/similarity.hpp"

namespace neurodec::generation {

struct AnchorSet {
  std::vector<std::string> words;  // w_1..w_5, usually a decoder's Top-5
  double strength = 7.0;           // k
};

// The anchoring term adds similarity by default; `distance` adds
// 1 - similarity instead.
enum class AnchorMeasure { similarity, distance };

struct GenConfig {
  int tokens_to_generate = 30;
  int topk = 40;
  int runs_per_scan = 10;
  std::uint64_t seed = 0;
  AnchorMeasure measure = AnchorMeasure::similarity;
};

// Per-token anchor affinity sum_j cos(gamma(t_i), gamma(w_j)). Tokens without
// an embedding get 0; anchors without one are skipped.
inline std::vector<double> anchor_affinity(const std::vector<std::string>& lm_vocab, const AnchorSet& anchors,
                                           const data::EmbeddingTable& embeddings,
                                           AnchorMeasure measure = AnchorMeasure::similarity) {
  std::vector<const Tensor*> anchor_vecs;
  for (const auto& w : anchors.words)
    if (const Tensor* v = embeddings.find(w)) anchor_vecs.push_back(v);
  require(!anchor_vecs.empty(), ErrorKind::anchor, "none of the anchor words has an embedding");
  std::vector<double> out(lm_vocab.size(), 0.0);
  for (std::size_t i = 0; i < lm_vocab.size(); ++i) {
    const Tensor* t = embeddings.find(lm_vocab[i]);
    if (!t) continue;
    double s = 0.0;
    for (const Tensor* a : anchor_vecs) {
      const double c = nn::cosine_similarity(t->values, a->values);
      s += measure == AnchorMeasure::similarity ? c : 1.0 - c;
    }
    out[i] = s;
  }
  return out;
}

// p'_i = p_i + k * affinity_i. An unnormalized score vector.
inline std::vector<double> anchor_adjust(std::span<const double> p, std::span<const double> affinity, double k) {
  require(p.size() == affinity.size(), ErrorKind::dimension, "probabilities vs anchor affinities");
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] + k * affinity[i];
  return out;
}

inline std::vector<double> anchor_adjust(std::span<const double> p, const AnchorSet& anchors,
                                         const std::vector<std::string>& lm_vocab,
                                         const data::EmbeddingTable& embeddings,
                                         AnchorMeasure measure = AnchorMeasure::similarity) {
  return anchor_adjust(p, anchor_affinity(lm_vocab, anchors, embeddings, measure), anchors.strength);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

// Keeps the `topk` highest scores (ties: lower index first), shifts them so
// the smallest retained score is 0 when any is negative, renormalizes and
// draws one index. All-zero retained mass falls back to uniform.
inline int sample_topk(std::span<const double> scores, int topk, Rng& rng) {
  require(topk >= 1, ErrorKind::argument, "topk must be >= 1");
  require(!scores.empty(), ErrorKind::argument, "empty score vector");
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(topk), scores.size());
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](int a, int b) {
    const double sa = scores[static_cast<std::size_t>(a)], sb = scores[static_cast<std::size_t>(b)];
    return sa != sb ? sa > sb : a < b;
  });
  idx.resize(k);
  std::vector<double> w(k);
  double lo = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    w[i] = scores[static_cast<std::size_t>(idx[i])];
    lo = std::min(lo, w[i]);
  }
  double total = 0.0;
  for (double& x : w) {
    x -= lo;
    total += x;
  }
  const double u = uniform01(rng);
  if (total <= 0.0) return idx[std::min(k - 1, static_cast<std::size_t>(u * static_cast<double>(k)))];
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc += w[i] / total;
    if (u < acc) return idx[i];
  }
  for (std::size_t i = k; i-- > 0;)
    if (w[i] > 0.0) return idx[i];
  return idx.front();
}

struct GenerationRecord {
  std::vector<std::string> context;
  std::vector<std::string> generated;
  std::vector<double> probabilities;  // LM probability of each sampled token before anchoring
  std::vector<std::string> anchors;
};

// Anchors are given as a precomputed affinity vector plus strength so a
// batch of runs shares one affinity computation.
struct AnchorGuide {
  std::vector<std::string> words;
  std::vector<double> affinity;
  double strength = 0.0;
};

inline AnchorGuide make_guide(const LanguageModel& lm, const AnchorSet& anchors, const data::EmbeddingTable& embeddings,
                              AnchorMeasure measure = AnchorMeasure::similarity) {
  return {anchors.words, anchor_affinity(lm.vocabulary(), anchors, embeddings, measure), anchors.strength};
}

inline void validate(const GenConfig& cfg, std::size_t vocab_size) {
  require(cfg.tokens_to_generate >= 1, ErrorKind::config, "tokens_to_generate must be >= 1");
  require(cfg.topk >= 1 && static_cast<std::size_t>(cfg.topk) <= vocab_size, ErrorKind::config,
          "topk must be in [1, " + std::to_string(vocab_size) + "]");
  require(cfg.runs_per_scan >= 1, ErrorKind::config, "runs_per_scan must be >= 1");
}

// Autoregressive loop. Each step records the unadjusted probability of the
// sampled token, so perplexity reflects the language model alone.
inline GenerationRecord generate(const LanguageModel& lm, std::span<const std::string> context,
                                 const AnchorGuide* guide, const GenConfig& cfg, Rng& rng) {
  validate(cfg, lm.vocabulary().size());
  if (guide)
    require(guide->affinity.size() == lm.vocabulary().size(), ErrorKind::dimension, "anchor guide vs LM vocabulary");
  GenerationRecord rec;
  rec.context.assign(context.begin(), context.end());
  if (guide) rec.anchors = guide->words;
  std::vector<int> ids = lm.encode(context);
  for (int step = 0; step < cfg.tokens_to_generate; ++step) {
    const auto p = lm.next_distribution(ids);
    const int next = guide ? sample_topk(anchor_adjust(p, guide->affinity, guide->strength), cfg.topk, rng)
                           : sample_topk(p, cfg.topk, rng);
    rec.probabilities.push_back(p[static_cast<std::size_t>(next)]);
    rec.generated.push_back(lm.vocabulary()[static_cast<std::size_t>(next)]);
    ids.push_back(next);
  }
  return rec;
}

// Independent stream per (seed, run).
inline Rng run_rng(std::uint64_t seed, std::uint64_t run) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(run >> 32)};
  return Rng(seq);
}

// Pools every recorded token across records: exp(-mean log p).
inline double perplexity(std::span<const GenerationRecord> records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records)
    for (double p : r.probabilities) {
      require(p > 0.0, ErrorKind::argument, "recorded probability must be > 0");
      sum += std::log(p);
      ++n;
    }
  require(n > 0, ErrorKind::argument, "perplexity of an empty record set");
  return std::exp(-sum / static_cast<double>(n));
}

// The n most cosine-similar table words to `word`, excluding itself.
inline std::vector<std::string> nearest_neighbors(const data::EmbeddingTable& table, const std::string& word,
                                                  std::size_t n) {
  const Tensor& q = table.at(word);
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.words()[i] == word) continue;
    scored.emplace_back(nn::cosine_similarity(q.values, table.vector_at(i).values), i);
  }
  const std::size_t k = std::min(n, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(table.words()[scored[i].second]);
  return out;
}

struct HitMetrics {
  double word_count = 0.0;     // mean occurrences of the correct word per record
  double related_count = 0.0;  // mean occurrences of its nearest neighbours per record
};

inline HitMetrics anchor_hit_metrics(std::span<const GenerationRecord> records, const std::string& correct_word,
                                     const data::EmbeddingTable& embeddings, std::size_t n_neighbors = 10) {
  HitMetrics m;
  if (records.empty()) return m;
  const std::string target = text::lower(correct_word);
  std::vector<std::string> related;
  for (const auto& w : nearest_neighbors(embeddings, correct_word, n_neighbors)) related.push_back(text::lower(w));
  for (const auto& r : records)
    for (const auto& tok : r.generated) {
      const std::string t = text::lower(tok);
      if (t == target) m.word_count += 1.0;
      if (std::find(related.begin(), related.end(), t) != related.end()) m.related_count += 1.0;
    }
  m.word_count /= static_cast<double>(records.size());
  m.related_count /= static_cast<double>(records.size());
  return m;
}

}  // namespace neurodec::generation
