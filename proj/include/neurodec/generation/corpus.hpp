#pragma once

#include <cctype>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "neurodec/data/dataset.hpp"
#include "neurodec/data/synth.hpp"
#include "neurodec/generation/language_model.hpp"

namespace neurodec::generation {

// Sentences end at '.', '!' or '?'. Text after the last terminator is kept
// when it contains a word.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  const auto flush = [&] {
    const auto t = text::trim(cur);
    if (!t.empty()) out.emplace_back(t);
    cur.clear();
  };
  for (char ch : text) {
    cur.push_back(ch == '\n' || ch == '\r' || ch == '\t' ? ' ' : ch);
    if (ch == '.' || ch == '!' || ch == '?') flush();
  }
  flush();
  return out;
}

// Capitalized word after the first token of the sentence.
inline bool has_mid_sentence_capital(std::string_view sentence) {
  const auto tokens = tokenize(sentence, /*keep_case=*/true);
  for (std::size_t i = 1; i < tokens.size(); ++i)
    if (std::isupper(static_cast<unsigned char>(tokens[i].front()))) return true;
  return false;
}

// Non-overlapping windows of two consecutive sentences, skipping windows in
// which either sentence looks like it holds a proper noun.
inline std::vector<std::vector<std::string>> select_contexts(std::string_view corpus, std::size_t max_contexts) {
  const auto sentences = split_sentences(corpus);
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i + 1 < sentences.size() && out.size() < max_contexts;) {
    if (has_mid_sentence_capital(sentences[i]) || has_mid_sentence_capital(sentences[i + 1])) {
      ++i;
      continue;
    }
    auto ctx = tokenize(sentences[i]);
    const auto second = tokenize(sentences[i + 1]);
    ctx.insert(ctx.end(), second.begin(), second.end());
    out.push_back(std::move(ctx));
    i += 2;
  }
  return out;
}

struct CorpusConfig {
  int n_sentences = 4000;
  int filler_nouns = 600;
  int related_per_word = 3;
  double vocabulary_noun_rate = 0.1;  // share of noun slots drawn from vocabulary and related words
  double name_rate = 0.1;             // share of sentences carrying a capitalized name
  double related_noise = 0.5;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  std::string text;
  data::EmbeddingTable embeddings;  // vocabulary words, related words and filler nouns
  std::vector<std::string> filler_nouns;
  std::vector<std::vector<std::string>> related;  // per vocabulary word
};

namespace detail {

inline std::string pseudo_word(Rng& rng, int syllables) {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  std::uniform_int_distribution<std::size_t> c(0, consonants.size() - 1), v(0, vowels.size() - 1);
  std::string w;
  for (int i = 0; i < syllables; ++i) {
    w.push_back(consonants[c(rng)]);
    w.push_back(vowels[v(rng)]);
  }
  return w;
}

}  // namespace detail

// Template sentences over a noun pool in which vocabulary words and their
// embedding-space neighbours are rare, so an unguided model seldom emits
// them. Related words embed near their source word; filler nouns get
// independent Gaussian vectors. Adjectives, verbs and function words have no
// embedding.
inline SyntheticCorpus generate_synthetic_corpus(const data::Vocabulary& vocab, const data::EmbeddingTable& base,
                                                 const CorpusConfig& cfg) {
  require(cfg.n_sentences >= 2, ErrorKind::config, "corpus needs at least two sentences");
  require(cfg.filler_nouns >= 1 && cfg.related_per_word >= 0, ErrorKind::config, "bad corpus noun counts");
  require(cfg.vocabulary_noun_rate >= 0.0 && cfg.vocabulary_noun_rate <= 1.0 && cfg.name_rate >= 0.0 &&
              cfg.name_rate <= 1.0,
          ErrorKind::config, "corpus rates must be in [0,1]");
  require(vocab.size() >= 1, ErrorKind::config, "empty vocabulary");
  Rng rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t d = base.dimension();

  std::set<std::string> taken(vocab.words.begin(), vocab.words.end());
  for (const auto& w : data::builtin_nouns()) taken.insert(w);
  const auto fresh = [&](int syllables) {
    for (;;) {
      auto w = detail::pseudo_word(rng, syllables);
      if (taken.insert(w).second) return w;
    }
  };
  const auto gaussian = [&](std::size_t n) {
    Tensor t = Tensor::vector(n);
    for (double& x : t.values) x = gauss(rng);
    return t;
  };

  SyntheticCorpus out;
  out.embeddings = data::EmbeddingTable(d);
  std::vector<std::string> rare;
  for (const auto& w : vocab.words) {
    out.embeddings.insert(w, base.at(w));
    rare.push_back(w);
  }
  for (const auto& w : vocab.words) {
    const Tensor& e = base.at(w);
    const double s = cfg.related_noise * norm(e.values) / std::sqrt(static_cast<double>(d));
    auto& rel = out.related.emplace_back();
    for (int r = 0; r < cfg.related_per_word; ++r) {
      Tensor v = gaussian(d);
      for (std::size_t i = 0; i < d; ++i) v.values[i] = e.values[i] + s * v.values[i];
      rel.push_back(fresh(3));
      out.embeddings.insert(rel.back(), std::move(v));
      rare.push_back(rel.back());
    }
  }
  for (int i = 0; i < cfg.filler_nouns; ++i) {
    out.filler_nouns.push_back(fresh(3));
    out.embeddings.insert(out.filler_nouns.back(), gaussian(d));
  }
  std::vector<std::string> adjectives, verbs, names;
  for (int i = 0; i < 25; ++i) adjectives.push_back(fresh(2));
  for (int i = 0; i < 25; ++i) verbs.push_back(fresh(2) + "s");
  for (int i = 0; i < 12; ++i) {
    auto n = fresh(2);
    n.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(n.front())));
    names.push_back(n);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto pick = [&](const std::vector<std::string>& pool) {
    return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  };
  const auto noun = [&] { return unit(rng) < cfg.vocabulary_noun_rate ? pick(rare) : pick(out.filler_nouns); };
  static const std::vector<std::string> preps = {"near", "with", "under", "behind", "beside"};

  for (int s = 0; s < cfg.n_sentences; ++s) {
    std::string line;
    const bool named = unit(rng) < cfg.name_rate;
    switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
      case 0: line = "the " + pick(adjectives) + " " + noun() + " " + pick(verbs) + " the " + noun(); break;
      case 1: line = "a " + noun() + " " + pick(verbs) + " " + pick(preps) + " the " + pick(adjectives) + " " + noun(); break;
      case 2: line = "every " + noun() + " " + pick(verbs) + " a " + noun(); break;
      default: line = "the " + noun() + " and the " + noun() + " " + pick(verbs); break;
    }
    if (named) line = "then " + pick(names) + " " + pick(verbs) + " and " + line;
    line.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(line.front())));
    out.text += line + ".\n";
  }
  return out;
}

}  // namespace neurodec::generation
