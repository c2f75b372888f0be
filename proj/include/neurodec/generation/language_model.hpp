#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "neurodec/text.hpp"

namespace neurodec::generation {

// Lowercased word tokens ([a-z0-9'] runs); sentence punctuation . , ! ? ; :
// becomes its own token.
inline std::vector<std::string> tokenize(std::string_view s, bool keep_case = false) {
  std::vector<std::string> out;
  std::string cur;
  const auto flush = [&] {
    if (!cur.empty()) out.push_back(keep_case ? cur : text::lower(cur));
    cur.clear();
  };
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '\'') {
      cur.push_back(ch);
    } else {
      flush();
      if (ch == '.' || ch == ',' || ch == '!' || ch == '?' || ch == ';' || ch == ':') out.emplace_back(1, ch);
    }
  }
  flush();
  return out;
}

// Next-token distributions over a fixed token vocabulary. Implementations
// must tolerate concurrent next_distribution calls.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual const std::vector<std::string>& vocabulary() const = 0;
  // Probabilities over vocabulary(), summing to 1.
  virtual std::vector<double> next_distribution(std::span<const int> context) const = 0;
  virtual int unknown_id() const = 0;

  int token_id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? unknown_id() : it->second;
  }

  std::vector<int> encode(std::span<const std::string> tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(token_id(t));
    return ids;
  }

 protected:
  // Implementations call this once their vocabulary is final.
  void build_index() {
    index_.clear();
    for (std::size_t i = 0; i < vocabulary().size(); ++i) index_.emplace(vocabulary()[i], static_cast<int>(i));
  }

 private:
  std::unordered_map<std::string, int> index_;
};

struct NGramOptions {
  int order = 3;
  std::size_t vocab_cap = 20000;  // including <unk>
  double additive = 0.01;         // add-delta smoothing per order
};

// Interpolated n-gram model with add-delta smoothing at every order. Orders
// whose context was never observed drop out and the remaining
// interpolation weights (2^(k-1) for order k) are renormalized.
class NGramLM final : public LanguageModel {
 public:
  static constexpr const char* kUnknown = "<unk>";

  static NGramLM train(std::string_view corpus, const NGramOptions& opts = {}) {
    require(opts.order >= 1, ErrorKind::argument, "n-gram order must be >= 1");
    require(opts.vocab_cap >= 2, ErrorKind::argument, "vocabulary cap must leave room for <unk> and one token");
    require(opts.additive > 0.0, ErrorKind::argument, "additive smoothing must be > 0");
    const auto tokens = tokenize(corpus);
    require(!tokens.empty(), ErrorKind::data, "empty corpus");

    std::map<std::string, std::size_t> freq;
    for (const auto& t : tokens) ++freq[t];
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    NGramLM lm;
    lm.opts_ = opts;
    lm.vocab_.push_back(kUnknown);
    for (const auto& [w, c] : ranked) {
      if (lm.vocab_.size() >= opts.vocab_cap) break;
      if (w != kUnknown) lm.vocab_.push_back(w);
    }
    lm.build_index();

    const auto ids = lm.encode(tokens);
    lm.counts_.resize(static_cast<std::size_t>(opts.order));
    for (std::size_t pos = 0; pos < ids.size(); ++pos)
      for (int k = 1; k <= opts.order; ++k) {
        const auto h = static_cast<std::size_t>(k - 1);
        if (pos < h) break;
        std::vector<int> ctx(ids.begin() + static_cast<std::ptrdiff_t>(pos - h),
                             ids.begin() + static_cast<std::ptrdiff_t>(pos));
        auto& entry = lm.counts_[h][ctx];
        ++entry.total;
        ++entry.next[ids[pos]];
      }
    return lm;
  }

  const std::vector<std::string>& vocabulary() const override { return vocab_; }
  int unknown_id() const override { return 0; }
  int order() const { return opts_.order; }

  std::vector<double> next_distribution(std::span<const int> context) const override {
    const std::size_t m = vocab_.size();
    std::vector<double> p(m, 0.0);
    double weight_sum = 0.0;
    std::vector<std::pair<double, const Entry*>> active;
    for (int k = 1; k <= opts_.order; ++k) {
      const auto h = static_cast<std::size_t>(k - 1);
      if (context.size() < h) break;
      std::vector<int> ctx(context.end() - static_cast<std::ptrdiff_t>(h), context.end());
      auto it = counts_[h].find(ctx);
      if (it == counts_[h].end()) continue;
      const double w = static_cast<double>(1u << h);
      active.emplace_back(w, &it->second);
      weight_sum += w;
    }
    if (active.empty()) {
      std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(m));
      return p;
    }
    const double delta = opts_.additive;
    for (const auto& [w, e] : active) {
      const double lambda = w / weight_sum;
      const double denom = static_cast<double>(e->total) + delta * static_cast<double>(m);
      const double base = lambda * delta / denom;
      for (double& x : p) x += base;
      for (const auto& [tok, c] : e->next) p[static_cast<std::size_t>(tok)] += lambda * static_cast<double>(c) / denom;
    }
    return p;
  }

  friend bool operator==(const NGramLM& a, const NGramLM& b) {
    if (a.vocab_ != b.vocab_ || a.counts_.size() != b.counts_.size()) return false;
    for (std::size_t h = 0; h < a.counts_.size(); ++h) {
      if (a.counts_[h].size() != b.counts_[h].size()) return false;
      for (auto ia = a.counts_[h].begin(), ib = b.counts_[h].begin(); ia != a.counts_[h].end(); ++ia, ++ib)
        if (ia->first != ib->first || ia->second.total != ib->second.total || ia->second.next != ib->second.next)
          return false;
    }
    return true;
  }

 private:
  struct Entry {
    std::size_t total = 0;
    std::map<int, std::size_t> next;
  };

  NGramOptions opts_;
  std::vector<std::string> vocab_;
  std::vector<std::map<std::vector<int>, Entry>> counts_;  // [order-1][context]
};

}  // namespace neurodec::generation
