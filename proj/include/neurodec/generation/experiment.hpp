#pragma once

#include <optional>
#include <ostream>

#include "neurodec/generation/anchoring.hpp"

namespace neurodec::generation {

// One decoded scan: the word it showed and the decoder's top predictions.
struct AnchorTarget {
  std::string correct_word;
  std::vector<std::string> anchors;
};

struct ConditionResult {
  std::string name;
  std::optional<double> strength;  // none: unanchored
  std::vector<GenerationRecord> records;
  std::vector<std::size_t> target_of;  // record -> AnchorTarget index
  double perplexity = 0.0;
  HitMetrics hits;
};

// runs_per_scan generations per target. Run r of target t uses context
// (t * runs + r) mod |contexts| and RNG stream run_rng(seed, t * runs + r),
// so conditions differ only in the anchoring term.
inline ConditionResult run_condition(const LanguageModel& lm, const std::vector<std::vector<std::string>>& contexts,
                                     std::span<const AnchorTarget> targets, std::optional<double> strength,
                                     const data::EmbeddingTable& embeddings, const GenConfig& cfg) {
  require(!contexts.empty(), ErrorKind::data, "no generation contexts");
  ConditionResult out;
  out.strength = strength;
  out.name = strength ? "k=" + text::format_double(*strength) : "unanchored";
  const auto runs = static_cast<std::size_t>(cfg.runs_per_scan);
  double word = 0.0, related = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    std::optional<AnchorGuide> guide;
    if (strength) guide = make_guide(lm, {targets[t].anchors, *strength}, embeddings, cfg.measure);
    const std::size_t first = out.records.size();
    for (std::size_t r = 0; r < runs; ++r) {
      const std::size_t id = t * runs + r;
      Rng rng = run_rng(cfg.seed, id);
      out.records.push_back(generate(lm, contexts[id % contexts.size()], guide ? &*guide : nullptr, cfg, rng));
      out.target_of.push_back(t);
    }
    const auto hits = anchor_hit_metrics(std::span(out.records).subspan(first), targets[t].correct_word, embeddings);
    word += hits.word_count * static_cast<double>(runs);
    related += hits.related_count * static_cast<double>(runs);
  }
  if (!out.records.empty()) {
    out.perplexity = perplexity(out.records);
    out.hits.word_count = word / static_cast<double>(out.records.size());
    out.hits.related_count = related / static_cast<double>(out.records.size());
  }
  return out;
}

// One block per record:
//   record=<i> condition=<name> target=<t> word=<w>
//   context: <tokens>
//   anchors: <words>
//   tokens: <tokens>
//   probabilities: <p...>
inline void write_records(std::ostream& out, const ConditionResult& c, std::span<const AnchorTarget> targets) {
  const auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
    return s;
  };
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto& r = c.records[i];
    out << "record=" << i << " condition=" << c.name << " target=" << c.target_of[i]
        << " word=" << targets[c.target_of[i]].correct_word << '\n';
    out << "context: " << join(r.context) << '\n';
    out << "anchors: " << join(r.anchors) << '\n';
    out << "tokens: " << join(r.generated) << '\n';
    out << "probabilities:";
    for (double p : r.probabilities) out << ' ' << text::format_double(p);
    out << "\n\n";
  }
}

}  // namespace neurodec::generation
