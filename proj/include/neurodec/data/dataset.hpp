#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "neurodec/data/atlas.hpp"
#include "neurodec/tensor.hpp"

namespace neurodec::data {

struct Scan {
  Tensor voxels;  // [n], raw BOLD values
  std::string subject_id;
  std::optional<int> word_index;  // none for sentence scans
  std::optional<int> paradigm;

  friend bool operator==(const Scan&, const Scan&) = default;
};

struct Vocabulary {
  std::vector<std::string> words;

  std::size_t size() const { return words.size(); }

  std::optional<int> find(const std::string& w) const {
    for (std::size_t i = 0; i < words.size(); ++i)
      if (words[i] == w) return static_cast<int>(i);
    return std::nullopt;
  }

  int index_of(const std::string& w) const {
    auto i = find(w);
    if (!i) fail(ErrorKind::lookup, "word '" + w + "' is not in the vocabulary");
    return *i;
  }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

inline void validate(const Vocabulary& vocab) {
  std::set<std::string> seen;
  for (const auto& w : vocab.words)
    require(seen.insert(w).second, ErrorKind::format, "duplicate vocabulary word '" + w + "'");
}

// Word -> dense vector. Insertion order is preserved so neighbour searches
// break ties deterministically.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dimension) : dimension_(dimension) {}

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const Tensor& vector_at(std::size_t i) const { return vectors_[i]; }

  void insert(const std::string& word, Tensor v) {
    if (words_.empty() && dimension_ == 0) dimension_ = v.size();
    require(v.size() == dimension_, ErrorKind::format,
            "embedding for '" + word + "' has dimension " + std::to_string(v.size()) + ", table has " +
                std::to_string(dimension_));
    require(norm(v.values) > 0.0, ErrorKind::format, "embedding for '" + word + "' has zero norm");
    if (auto it = index_.find(word); it != index_.end()) {
      vectors_[it->second] = std::move(v);
      return;
    }
    index_.emplace(word, words_.size());
    words_.push_back(word);
    vectors_.push_back(std::move(v));
  }

  const Tensor* find(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? nullptr : &vectors_[it->second];
  }

  const Tensor& at(const std::string& word) const {
    const Tensor* v = find(word);
    if (!v) fail(ErrorKind::lookup, "no embedding for '" + word + "'");
    return *v;
  }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.dimension_ == b.dimension_ && a.words_ == b.words_ && a.vectors_ == b.vectors_;
  }

 private:
  std::size_t dimension_ = 0;
  std::vector<std::string> words_;
  std::vector<Tensor> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Dataset {
  Atlas atlas;
  Vocabulary vocabulary;
  EmbeddingTable embeddings;
  std::vector<Scan> word_scans;
  std::vector<Scan> sentence_scans;

  // Subjects in order of first appearance (word scans, then sentence scans).
  std::vector<std::string> subjects() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto* list : {&word_scans, &sentence_scans})
      for (const auto& s : *list)
        if (seen.insert(s.subject_id).second) out.push_back(s.subject_id);
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Embedding table embeddings for the vocabulary as a [v x d] matrix.
inline Tensor embedding_matrix(const EmbeddingTable& table, const Vocabulary& vocab) {
  Tensor out = Tensor::matrix(vocab.size(), table.dimension());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const Tensor& e = table.at(vocab.words[i]);
    std::copy(e.values.begin(), e.values.end(), out.row(i).begin());
  }
  return out;
}

inline Tensor pad_scan(const Tensor& raw, std::size_t total_voxels) {
  require(raw.size() <= total_voxels, ErrorKind::size,
          "scan of " + std::to_string(raw.size()) + " voxels exceeds total " + std::to_string(total_voxels));
  Tensor out = Tensor::vector(total_voxels);
  std::copy(raw.values.begin(), raw.values.end(), out.values.begin());
  return out;
}

// Zero mean, unit variance over the covered voxels; other voxels untouched.
inline void standardize_covered(std::span<double> voxels, std::span<const std::size_t> covered) {
  if (covered.empty()) return;
  double mean = 0.0;
  for (std::size_t i : covered) mean += voxels[i];
  mean /= static_cast<double>(covered.size());
  double var = 0.0;
  for (std::size_t i : covered) var += (voxels[i] - mean) * (voxels[i] - mean);
  var /= static_cast<double>(covered.size());
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  for (std::size_t i : covered) voxels[i] = (voxels[i] - mean) * inv;
}

// Model input batch [n x total_voxels]: each scan padded, then standardized
// over ROI-covered voxels.
inline Tensor assemble_inputs(std::span<const Scan* const> scans, const Atlas& atlas) {
  const auto covered = atlas.covered_indices();
  Tensor batch = Tensor::matrix(scans.size(), atlas.total_voxels);
  for (std::size_t b = 0; b < scans.size(); ++b) {
    const Tensor padded = pad_scan(scans[b]->voxels, atlas.total_voxels);
    auto row = batch.row(b);
    std::copy(padded.values.begin(), padded.values.end(), row.begin());
    standardize_covered(row, covered);
  }
  return batch;
}

inline Tensor assemble_inputs(std::span<const Scan> scans, const Atlas& atlas) {
  std::vector<const Scan*> ptrs;
  for (const auto& s : scans) ptrs.push_back(&s);
  return assemble_inputs(std::span<const Scan* const>(ptrs), atlas);
}

// --- embedding files: `word v1 ... vd` per line ------------------------------

inline EmbeddingTable read_embedding_file(const std::string& path) {
  auto in = text::open_in(path);
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = text::split_whitespace(line);
    if (toks.empty()) continue;
    require(toks.size() >= 2, ErrorKind::format, path + ":" + std::to_string(lineno) + ": word without values");
    std::vector<double> v;
    v.reserve(toks.size() - 1);
    for (std::size_t i = 1; i < toks.size(); ++i) v.push_back(text::parse_double(toks[i], "embedding value"));
    if (table.size() > 0 && v.size() != table.dimension())
      fail(ErrorKind::format, path + ":" + std::to_string(lineno) + ": dimension " + std::to_string(v.size()) +
                                  " differs from " + std::to_string(table.dimension()));
    table.insert(toks[0], Tensor::from(std::move(v)));
  }
  return table;
}

// Keeps the vocabulary words plus `extra_words` found in the file; every
// vocabulary word must be present.
inline EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab,
                                      std::span<const std::string> extra_words = {}) {
  const EmbeddingTable all = read_embedding_file(path);
  EmbeddingTable out(all.dimension());
  std::string missing;
  for (const auto& w : vocab.words) {
    if (const Tensor* v = all.find(w))
      out.insert(w, *v);
    else
      missing += (missing.empty() ? "" : ", ") + w;
  }
  require(missing.empty(), ErrorKind::lookup, "embedding file '" + path + "' lacks vocabulary words: " + missing);
  for (const auto& w : extra_words)
    if (const Tensor* v = all.find(w)) out.insert(w, *v);
  return out;
}

inline void save_embeddings(const std::string& path, const EmbeddingTable& table) {
  auto out = text::open_out(path);
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.words()[i];
    for (double x : table.vector_at(i).values) out << ' ' << text::format_double(x);
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::io, "failed writing '" + path + "'");
}

inline Vocabulary load_vocabulary(const std::string& path) {
  auto in = text::open_in(path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    auto w = text::trim(line);
    if (!w.empty()) v.words.emplace_back(w);
  }
  validate(v);
  return v;
}

inline void save_vocabulary(const std::string& path, const Vocabulary& vocab) {
  auto out = text::open_out(path);
  for (const auto& w : vocab.words) out << w << '\n';
}

}  // namespace neurodec::data
