#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "neurodec/training.hpp"

namespace neurodec::evaluation {

struct PairwiseResult {
  double accuracy = 0.0;
  std::size_t n_pairs = 0;
  std::map<int, double> per_paradigm;
  std::map<int, std::size_t> pairs_per_paradigm;
  std::size_t degenerate_vectors = 0;  // constant decoded vectors, scored as losses
};

// 2AFC over pairs of scans with different words: a pair is won when
// corr(d_i,e_i) + corr(d_j,e_j) > corr(d_i,e_j) + corr(d_j,e_i); an exact tie
// scores one half. Pairs are formed within a paradigm and paradigm
// accuracies averaged, unless `pool_paradigms`.
inline PairwiseResult pairwise_accuracy(const Tensor& decoded, std::span<const int> labels,
                                        std::span<const int> paradigms, const Tensor& embeddings,
                                        bool pool_paradigms = false) {
  const std::size_t n = decoded.rows();
  require(labels.size() == n && paradigms.size() == n, ErrorKind::dimension, "labels/paradigms vs decoded rows");
  require(decoded.cols() == embeddings.cols(), ErrorKind::dimension, "decoded width vs embedding width");
  require(std::set<int>(labels.begin(), labels.end()).size() >= 2, ErrorKind::argument,
          "pairwise accuracy needs at least two distinct words");

  std::vector<bool> degenerate(n, false);
  PairwiseResult r;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = decoded.row(i);
    degenerate[i] = std::all_of(row.begin(), row.end(), [&](double v) { return v == row[0]; });
    if (degenerate[i]) ++r.degenerate_vectors;
  }
  // corr(d_i, e_w) for every scan and every word that labels some scan
  std::map<std::pair<std::size_t, int>, double> corr;
  const std::set<int> words(labels.begin(), labels.end());
  for (std::size_t i = 0; i < n; ++i)
    if (!degenerate[i])
      for (int w : words) corr[{i, w}] = nn::pearson_correlation(decoded.row(i), embeddings.row(static_cast<std::size_t>(w)));

  std::map<int, double> wins;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (labels[i] == labels[j]) continue;
      const int group = pool_paradigms ? 0 : paradigms[i];
      if (!pool_paradigms && paradigms[i] != paradigms[j]) continue;
      ++r.pairs_per_paradigm[group];
      ++r.n_pairs;
      if (degenerate[i] || degenerate[j]) {
        wins[group] += 0.0;
        continue;
      }
      const double match = corr[{i, labels[i]}] + corr[{j, labels[j]}];
      const double swap = corr[{i, labels[j]}] + corr[{j, labels[i]}];
      wins[group] += match > swap ? 1.0 : (match == swap ? 0.5 : 0.0);
    }
  double sum = 0.0;
  for (const auto& [g, pairs] : r.pairs_per_paradigm) {
    r.per_paradigm[g] = wins[g] / static_cast<double>(pairs);
    sum += r.per_paradigm[g];
  }
  r.accuracy = r.per_paradigm.empty() ? 0.0 : sum / static_cast<double>(r.per_paradigm.size());
  return r;
}

struct TopKResult {
  int k = 1;
  double accuracy = 0.0;
  std::map<int, double> per_paradigm;
  std::vector<std::vector<std::size_t>> confusion;  // [true word][top-1 prediction]
};

inline TopKResult topk_accuracy_from_probs(const Tensor& probs, std::span<const int> labels,
                                           std::span<const int> paradigms, int k) {
  require(labels.size() == probs.rows() && paradigms.size() == probs.rows(), ErrorKind::dimension,
          "labels/paradigms vs probability rows");
  TopKResult r;
  r.k = k;
  const std::size_t v = probs.cols();
  r.confusion.assign(v, std::vector<std::size_t>(v, 0));
  std::map<int, std::pair<std::size_t, std::size_t>> by_paradigm;  // hits, total
  std::size_t hits = 0;
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    const auto top = model::topk_from_probs(probs.row(n), k);
    const bool hit = std::any_of(top.begin(), top.end(), [&](const auto& p) { return p.word_index == labels[n]; });
    hits += hit;
    auto& [h, t] = by_paradigm[paradigms[n]];
    h += hit;
    ++t;
    ++r.confusion[static_cast<std::size_t>(labels[n])][static_cast<std::size_t>(top.front().word_index)];
  }
  for (const auto& [p, ht] : by_paradigm)
    r.per_paradigm[p] = static_cast<double>(ht.first) / static_cast<double>(ht.second);
  r.accuracy = probs.rows() ? static_cast<double>(hits) / static_cast<double>(probs.rows()) : 0.0;
  return r;
}

namespace detail {

inline std::vector<int> labels_of(std::span<const data::Scan* const> scans) {
  std::vector<int> out;
  for (const auto* s : scans) out.push_back(s->word_index.value());
  return out;
}

inline std::vector<int> paradigms_of(std::span<const data::Scan* const> scans) {
  std::vector<int> out;
  for (const auto* s : scans) out.push_back(s->paradigm.value_or(0));
  return out;
}

}  // namespace detail

inline TopKResult topk_accuracy(model::BrainDecoder& m, std::span<const data::Scan* const> scans, int k) {
  require(m.class_hidden.has_value(), ErrorKind::config, "top-k accuracy needs the classification head");
  const auto acts = model::infer(m, scans);
  return topk_accuracy_from_probs(*acts.class_probs, detail::labels_of(scans), detail::paradigms_of(scans), k);
}

inline PairwiseResult pairwise_accuracy(model::BrainDecoder& m, std::span<const data::Scan* const> scans,
                                        const Tensor& embeddings, bool pool_paradigms = false) {
  require(m.regression.has_value(), ErrorKind::config, "pairwise accuracy needs the regression head");
  const auto acts = model::infer(m, scans);
  return pairwise_accuracy(*acts.regression_out, detail::labels_of(scans), detail::paradigms_of(scans), embeddings,
                           pool_paradigms);
}

// --- ablation ladder ----------------------------------------------------------------------

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v = {"base", "roi", "rec", "mean", "pretrain"};
  return v;
}

struct VariantSetup {
  model::ModelConfig model;
  training::TrainConfig train;
  losses::LossWeights weights;
};

// Cumulative ladder: base -> +ROI layer -> +reconstruction -> +mean
// regularization -> +pretraining. `full` supplies sizes and weights.
inline VariantSetup variant_setup(const std::string& variant, const VariantSetup& full) {
  const auto& names = ablation_variants();
  const auto pos = std::find(names.begin(), names.end(), variant);
  require(pos != names.end(), ErrorKind::argument, "unknown variant '" + variant + "'");
  const auto level = pos - names.begin();
  VariantSetup s = full;
  s.model.use_roi_layer = level >= 1;
  s.model.autoencoder = level >= 2;
  if (level < 2) s.weights.w_rec = 0.0;
  if (level < 3) s.weights.w_mean = 0.0;
  if (level < 4) s.train.pretrain_epochs = 0;
  return s;
}

struct AblationRow {
  std::string variant;
  double pairwise = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<std::string> warnings;
};

// Each variant trains a regression decoder (pairwise) and a classification
// decoder (Top-1/Top-5) on the validation rotation and is scored on the
// validation subject.
inline AblationResult run_ablation(const data::Dataset& ds, const std::string& validation_subject,
                                   const VariantSetup& full) {
  const auto subjects = ds.subjects();
  const auto plan = data::leave_one_out_splits(subjects, validation_subject);
  const auto monitor = training::monitor_subject_for(subjects, validation_subject, validation_subject);
  const Tensor emb = data::embedding_matrix(ds.embeddings, ds.vocabulary);
  const int k5 = std::min<int>(5, static_cast<int>(ds.vocabulary.size()));
  AblationResult out;
  for (const auto& variant : ablation_variants()) {
    auto setup = variant_setup(variant, full);
    if (variant == "pretrain" && ds.sentence_scans.empty()) {
      out.warnings.push_back("pretraining row skipped: dataset has no sentence scans");
      continue;
    }
    const std::uint64_t seed = full.train.seed;
    AblationRow row{variant};

    auto reg = setup;
    reg.model.regression_head = true;
    reg.model.classification_head = false;
    reg.weights.w_class = 0.0;
    auto rr = training::train_rotation(ds, plan.validation, monitor, reg.model, reg.train, reg.weights, seed);
    row.pairwise = pairwise_accuracy(rr.training.model, rr.test_scans, emb).accuracy;

    auto cls = setup;
    cls.model.regression_head = false;
    cls.model.classification_head = true;
    cls.weights.w_reg = 0.0;
    auto rc = training::train_rotation(ds, plan.validation, monitor, cls.model, cls.train, cls.weights, seed);
    row.top1 = topk_accuracy(rc.training.model, rc.test_scans, 1).accuracy;
    row.top5 = topk_accuracy(rc.training.model, rc.test_scans, k5).accuracy;
    out.rows.push_back(row);
  }
  return out;
}

// --- reports ----------------------------------------------------------------------------------

// Rows of named numeric columns. Written as `<base>.txt` (one
// `row=<name> metric=<col> value=<v>` record per value) and `<base>.tsv`
// (header line, then one tab-separated row per entry).
struct MetricTable {
  std::vector<std::string> columns;
  std::vector<std::pair<std::string, std::vector<double>>> rows;

  friend bool operator==(const MetricTable&, const MetricTable&) = default;
};

inline void write_report(const MetricTable& table, const std::filesystem::path& base) {
  if (base.has_parent_path()) text::make_directories(base.parent_path());
  auto txt = text::open_out(base.string() + ".txt");
  auto tsv = text::open_out(base.string() + ".tsv");
  tsv << "name";
  for (const auto& c : table.columns) tsv << '\t' << c;
  tsv << '\n';
  for (const auto& [name, values] : table.rows) {
    require(values.size() == table.columns.size(), ErrorKind::dimension, "report row '" + name + "' width");
    tsv << name;
    for (std::size_t i = 0; i < values.size(); ++i) {
      tsv << '\t' << text::format_double(values[i]);
      txt << "row=" << name << " metric=" << table.columns[i] << " value=" << text::format_double(values[i]) << '\n';
    }
    tsv << '\n';
  }
  require(static_cast<bool>(txt) && static_cast<bool>(tsv), ErrorKind::io, "failed writing report " + base.string());
}

inline MetricTable read_table(const std::filesystem::path& tsv_path) {
  auto in = text::open_in(tsv_path.string());
  MetricTable t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::format, "empty table file");
  auto header = text::split(line, '\t');
  t.columns.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = text::split(line, '\t');
    require(cols.size() == header.size(), ErrorKind::format, "table row width mismatch");
    std::vector<double> values;
    for (std::size_t i = 1; i < cols.size(); ++i) values.push_back(text::parse_double(cols[i], t.columns[i - 1]));
    t.rows.emplace_back(cols[0], std::move(values));
  }
  return t;
}

inline MetricTable ablation_table(const std::vector<AblationRow>& rows) {
  MetricTable t{{"pairwise", "top1", "top5"}, {}};
  for (const auto& r : rows) t.rows.emplace_back(r.variant, std::vector<double>{r.pairwise, r.top1, r.top5});
  return t;
}

}  // namespace neurodec::evaluation
