// neurodec: command-line front end for the decoding and generation pipeline.
//
// Exit codes: 0 success, 1 validation or data error, 2 internal invariant
// violation (including a failed gradient check).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "neurodec/config.hpp"
#include "neurodec/data/scan_store.hpp"
#include "neurodec/data/synth.hpp"
#include "neurodec/evaluation.hpp"
#include "neurodec/generation/corpus.hpp"
#include "neurodec/generation/experiment.hpp"
#include "neurodec/gradient_suite.hpp"
#include "neurodec/model/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace neurodec;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string corpus;
  std::string embeddings;
  std::string subject;
  std::string validation_subject;
  std::string k_list;
  std::optional<double> anchor_strength;
  std::string variant;
  int parallel_rotations = 1;
  int seeds = 10;
};

config::RunConfig resolve(const Options& o) {
  config::RunConfig c = o.config_path.empty() ? config::RunConfig{} : config::load_config(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, ErrorKind::config, "--set expects key=value, got '" + kv + "'");
    config::set_value(c, std::string(text::trim(kv.substr(0, eq))), std::string(text::trim(kv.substr(eq + 1))));
  }
  if (o.seed) c.seed = *o.seed;
  config::propagate_seed(c);
  if (!o.out.empty()) c.paths.out_dir = o.out;
  if (!o.data.empty()) c.paths.data_dir = o.data;
  if (!o.checkpoint.empty()) c.paths.checkpoint = o.checkpoint;
  if (!o.corpus.empty()) c.paths.corpus = o.corpus;
  if (!o.embeddings.empty()) c.paths.embeddings = o.embeddings;
  if (!o.validation_subject.empty()) c.eval.validation_subject = o.validation_subject;
  if (!o.k_list.empty()) config::set_value(c, "eval.k", o.k_list);
  return c;
}

void echo_config(const config::RunConfig& c) {
  text::make_directories(c.paths.out_dir);
  auto out = text::open_out((fs::path(c.paths.out_dir) / "config_echo").string());
  out << config::serialize(c);
}

data::Dataset load_data(config::RunConfig& c) {
  require(!c.paths.data_dir.empty(), ErrorKind::config, "no dataset directory (--data or paths.data_dir)");
  auto ds = data::load_dataset(c.paths.data_dir);
  // The decoder's output sizes follow the dataset.
  c.model.vocab_size = static_cast<int>(ds.vocabulary.size());
  c.model.embedding_dim = static_cast<int>(ds.embeddings.dimension());
  if (c.eval.validation_subject.empty()) c.eval.validation_subject = ds.subjects().back();
  return ds;
}

void apply_variant(config::RunConfig& c, const std::string& variant) {
  if (variant.empty()) return;
  evaluation::VariantSetup full{c.model, c.train, c.loss};
  const auto v = evaluation::variant_setup(variant, full);
  c.model = v.model;
  c.train = v.train;
  c.loss = v.weights;
}

void warn(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_synth(const Options& o) {
  auto c = resolve(o);
  config::validate(c);
  const auto ds = data::generate_synthetic_dataset(c.synth);
  data::save_dataset(c.paths.out_dir, ds);
  c.paths.data_dir = c.paths.out_dir;
  echo_config(c);
  std::cout << "wrote " << ds.word_scans.size() << " word scans and " << ds.sentence_scans.size()
            << " sentence scans to " << c.paths.out_dir << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  auto c = resolve(o);
  const auto ds = load_data(c);
  apply_variant(c, o.variant);
  config::validate(c);
  echo_config(c);
  const fs::path out = c.paths.out_dir;

  training::LeaveOneOutOptions loo;
  loo.validation_subject = c.eval.validation_subject;
  loo.parallel_rotations = o.parallel_rotations;
  if (!o.subject.empty()) {
    loo.only_test_subjects = {o.subject};
    loo.include_validation_rotation = o.subject == c.eval.validation_subject;
  }
  const auto results = training::run_leave_one_out(ds, c.train, c.loss, c.model, loo);
  require(!results.empty(), ErrorKind::lookup, "no rotation matches subject '" + o.subject + "'");

  const Tensor emb = data::embedding_matrix(ds.embeddings, ds.vocabulary);
  auto manifest = text::open_out((out / "checkpoints.tsv").string());
  manifest << "test_subject\tmonitor_subject\tcheckpoint\tlog\tbest_epoch\tbest_metric\n";
  evaluation::MetricTable summary;
  summary.columns = {"best_epoch"};
  if (c.model.classification_head) summary.columns.insert(summary.columns.end(), {"top1", "top5"});
  if (c.model.regression_head) summary.columns.push_back("pairwise");
  for (auto r : results) {
    const std::string ckpt = "rotation_" + r.test_subject + ".ckpt";
    const std::string log = "rotation_" + r.test_subject + ".log";
    model::save_checkpoint(out / ckpt, r.training.model);
    auto lf = text::open_out((out / log).string());
    for (const auto& e : r.training.log) training::write_log_entry(lf, e);
    manifest << r.test_subject << '\t' << r.monitor_subject << '\t' << ckpt << '\t' << log << '\t'
             << r.training.best_epoch << '\t' << text::format_double(r.training.best_metric) << '\n';
    warn(r.training.warnings);

    std::vector<double> row{static_cast<double>(r.training.best_epoch)};
    auto& m = r.training.model;
    if (c.model.classification_head) {
      const int k5 = std::min<int>(5, static_cast<int>(ds.vocabulary.size()));
      row.push_back(evaluation::topk_accuracy(m, r.test_scans, 1).accuracy);
      row.push_back(evaluation::topk_accuracy(m, r.test_scans, k5).accuracy);
    }
    if (c.model.regression_head)
      row.push_back(evaluation::pairwise_accuracy(m, r.test_scans, emb, c.eval.pool_paradigms).accuracy);
    summary.rows.emplace_back(r.test_subject, row);
    std::cout << "rotation " << r.test_subject << ": best epoch " << r.training.best_epoch << '\n';
  }
  evaluation::write_report(summary, out / "train_summary");
  return 0;
}

int cmd_eval(const Options& o) {
  auto c = resolve(o);
  const auto ds = load_data(c);
  config::validate(c);
  require(!c.paths.checkpoint.empty(), ErrorKind::config, "no checkpoint (--checkpoint)");
  require(!o.subject.empty(), ErrorKind::config, "eval needs --subject (the held-out subject)");
  echo_config(c);
  auto m = model::load_checkpoint(c.paths.checkpoint);
  require(m.atlas == ds.atlas, ErrorKind::data, "checkpoint atlas differs from the dataset atlas");
  const auto scans = data::scans_of(ds.word_scans, {o.subject});
  require(!scans.empty(), ErrorKind::lookup, "no word scans for subject '" + o.subject + "'");

  evaluation::MetricTable t{{"value"}, {}};
  bool degenerate = false;
  if (m.class_hidden)
    for (int k : c.eval.k_values) {
      const auto r = evaluation::topk_accuracy(m, scans, k);
      t.rows.push_back({"top" + std::to_string(k), {r.accuracy}});
      for (const auto& [p, acc] : r.per_paradigm)
        t.rows.push_back({"top" + std::to_string(k) + ".paradigm" + std::to_string(p), {acc}});
    }
  if (m.regression) {
    const Tensor emb = data::embedding_matrix(ds.embeddings, ds.vocabulary);
    const auto r = evaluation::pairwise_accuracy(m, scans, emb, c.eval.pool_paradigms);
    t.rows.push_back({"pairwise", {r.accuracy}});
    for (const auto& [p, acc] : r.per_paradigm) t.rows.push_back({"pairwise.paradigm" + std::to_string(p), {acc}});
    t.rows.push_back({"degenerate_vectors", {static_cast<double>(r.degenerate_vectors)}});
    degenerate = r.degenerate_vectors > 0;
  }
  evaluation::write_report(t, fs::path(c.paths.out_dir) / "eval");
  for (const auto& [name, v] : t.rows) std::cout << name << '\t' << text::format_double(v[0]) << '\n';
  if (degenerate) {
    std::cerr << "error: decoded vectors with zero variance were scored as losses\n";
    return 1;
  }
  return 0;
}

int cmd_ablate(const Options& o) {
  auto c = resolve(o);
  const auto ds = load_data(c);
  config::validate(c);
  echo_config(c);
  evaluation::VariantSetup full{c.model, c.train, c.loss};
  auto result = evaluation::run_ablation(ds, c.eval.validation_subject, full);
  if (!o.variant.empty()) {
    std::erase_if(result.rows, [&](const auto& r) { return r.variant != o.variant; });
    require(!result.rows.empty(), ErrorKind::argument, "no ablation row for variant '" + o.variant + "'");
  }
  warn(result.warnings);
  const auto table = evaluation::ablation_table(result.rows);
  evaluation::write_report(table, fs::path(c.paths.out_dir) / "ablation");
  std::cout << "variant\tpairwise\ttop1\ttop5\n";
  for (const auto& r : result.rows)
    std::cout << r.variant << '\t' << text::format_double(r.pairwise) << '\t' << text::format_double(r.top1) << '\t'
              << text::format_double(r.top5) << '\n';
  return 0;
}

int cmd_generate(const Options& o) {
  auto c = resolve(o);
  const auto ds = load_data(c);
  config::validate(c);
  require(!c.paths.checkpoint.empty(), ErrorKind::config, "no checkpoint (--checkpoint) to decode anchors with");
  const std::string subject = o.subject.empty() ? c.eval.validation_subject : o.subject;
  const double strength = o.anchor_strength.value_or(7.0);
  const fs::path out = c.paths.out_dir;
  echo_config(c);

  std::string corpus_text;
  data::EmbeddingTable table;
  if (c.paths.corpus.empty()) {
    auto corpus = generation::generate_synthetic_corpus(ds.vocabulary, ds.embeddings, c.corpus);
    corpus_text = std::move(corpus.text);
    table = std::move(corpus.embeddings);
    text::open_out((out / "corpus.txt").string()) << corpus_text;
    data::save_embeddings((out / "corpus_embeddings.txt").string(), table);
  } else {
    std::stringstream ss;
    ss << text::open_in(c.paths.corpus).rdbuf();
    corpus_text = ss.str();
    table = ds.embeddings;
    if (!c.paths.embeddings.empty()) {
      const auto extra = data::read_embedding_file(c.paths.embeddings);
      for (std::size_t i = 0; i < extra.size(); ++i)
        if (!table.find(extra.words()[i])) table.insert(extra.words()[i], extra.vector_at(i));
    }
  }
  const auto lm = generation::NGramLM::train(corpus_text, c.ngram);
  const auto contexts = generation::select_contexts(corpus_text, static_cast<std::size_t>(c.contexts));

  auto m = model::load_checkpoint(c.paths.checkpoint);
  require(m.class_hidden.has_value(), ErrorKind::config, "anchor decoding needs a classification checkpoint");
  const auto scans = data::scans_of(ds.word_scans, {subject});
  require(!scans.empty(), ErrorKind::lookup, "no word scans for subject '" + subject + "'");
  std::vector<generation::AnchorTarget> targets;
  const int k5 = std::min<int>(5, static_cast<int>(ds.vocabulary.size()));
  for (const auto* s : scans) {
    generation::AnchorTarget t{ds.vocabulary.words[static_cast<std::size_t>(*s->word_index)], {}};
    for (const auto& p : model::predict_topk(m, *s, k5)) t.anchors.push_back(ds.vocabulary.words[static_cast<std::size_t>(p.word_index)]);
    targets.push_back(std::move(t));
  }

  evaluation::MetricTable summary{{"perplexity", "word_count", "related_count"}, {}};
  auto records = text::open_out((out / "generation_records.txt").string());
  for (auto k : {std::optional<double>{}, std::optional<double>{strength}}) {
    const auto r = generation::run_condition(lm, contexts, targets, k, table, c.gen);
    generation::write_records(records, r, targets);
    summary.rows.push_back({r.name, {r.perplexity, r.hits.word_count, r.hits.related_count}});
    std::cout << r.name << "\tperplexity=" << text::format_double(r.perplexity)
              << "\tword_count=" << text::format_double(r.hits.word_count)
              << "\trelated_count=" << text::format_double(r.hits.related_count) << '\n';
  }
  evaluation::write_report(summary, out / "generation_summary");
  return 0;
}

int cmd_gradcheck(const Options& o) {
  auto c = resolve(o);
  echo_config(c);
  const auto s = checks::run_gradient_suite(o.seeds);
  evaluation::MetricTable t{{"max_relative_error", "checked", "skipped_kinks", "passed"}, {}};
  for (const auto& [name, b] : s.blocks)
    t.rows.push_back({name, {b.max_relative_error, static_cast<double>(b.checked),
                             static_cast<double>(b.skipped_kinks), b.passed ? 1.0 : 0.0}});
  evaluation::write_report(t, fs::path(c.paths.out_dir) / "gradcheck");
  for (const auto& [name, b] : s.blocks)
    if (!b.passed) std::cerr << "FAIL " << name << " max relative error " << b.max_relative_error << '\n';
  std::cout << "gradcheck " << (s.passed() ? "passed" : "FAILED") << ": " << s.blocks.size() << " blocks, "
            << o.seeds << " seeds, max relative error " << text::format_double(s.max_error()) << '\n';
  return s.passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fMRI word decoding and anchored text generation"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "config file (key = value)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "run seed");
    sub->add_option("--set", o.overrides, "override a config key, key=value (repeatable)");
    sub->add_option("--out", o.out, "output directory");
  };
  const auto data_opt = [&](CLI::App* sub) { sub->add_option("--data", o.data, "dataset directory"); };
  const auto validation = [&](CLI::App* sub) {
    sub->add_option("--validation-subject", o.validation_subject, "validation subject (default: last)");
  };
  const std::vector<std::string> variants = evaluation::ablation_variants();

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  common(synth);

  auto* train = app.add_subcommand("train", "train one rotation or the full leave-one-out set");
  common(train);
  data_opt(train);
  validation(train);
  train->add_option("--subject", o.subject, "train only the rotation that holds out this subject");
  train->add_option("--variant", o.variant, "ablation ladder variant")->check(CLI::IsMember(variants));
  train->add_option("--parallel-rotations", o.parallel_rotations, "rotations trained concurrently")
      ->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a held-out subject");
  common(eval);
  data_opt(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  eval->add_option("--subject", o.subject, "held-out subject");
  eval->add_option("--k", o.k_list, "comma-separated top-k values, e.g. 1,5");

  auto* ablate = app.add_subcommand("ablate", "run the ablation ladder on the validation rotation");
  common(ablate);
  data_opt(ablate);
  validation(ablate);
  ablate->add_option("--variant", o.variant, "report only this variant")->check(CLI::IsMember(variants));

  auto* gen = app.add_subcommand("generate", "anchored text generation and its metrics");
  common(gen);
  data_opt(gen);
  validation(gen);
  gen->add_option("--checkpoint", o.checkpoint, "classification checkpoint used to decode anchors");
  gen->add_option("--subject", o.subject, "subject whose scans are decoded (default: validation subject)");
  gen->add_option("--corpus", o.corpus, "plain-text corpus (default: synthetic)");
  gen->add_option("--embeddings", o.embeddings, "extra word embeddings for corpus tokens");
  gen->add_option("--anchor-strength", o.anchor_strength, "anchor strength k (default 7)");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every layer and loss");
  common(grad);
  grad->add_option("--seeds", o.seeds, "number of random seeds")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*ablate) return cmd_ablate(o);
    if (*gen) return cmd_generate(o);
    if (*grad) return cmd_gradcheck(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::invariant ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
