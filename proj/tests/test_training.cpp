#include <gtest/gtest.h>

#include <bit>
#include <set>

#include "neurodec/data/splits.hpp"
#include "neurodec/data/synth.hpp"
#include "neurodec/training.hpp"

using namespace neurodec;
using namespace neurodec::training;

namespace {

data::SynthConfig small_synth() {
  data::SynthConfig c;
  c.n_subjects = 4;
  c.n_words = 6;
  c.n_paradigms = 2;
  c.total_voxels = 240;
  c.n_rois = 6;
  c.concept_dim = 6;
  c.embedding_dim = 8;
  c.sentence_scans_per_subject = 12;
  c.seed = 3;
  return c;
}

model::ModelConfig small_model() {
  model::ModelConfig m;
  m.roi_divisor = 5;
  m.hidden1_size = 24;
  m.latent_size = 12;
  m.embedding_dim = 8;
  m.vocab_size = 6;
  m.regression_head = true;
  return m;
}

TrainConfig small_train() {
  TrainConfig t;
  t.pretrain_epochs = 3;
  t.batch_size = 8;
  t.max_epochs = 12;
  t.saturation_patience = 2;
  t.early_stop_patience = 3;
  t.seed = 5;
  return t;
}

const data::Dataset& dataset() {
  static const data::Dataset ds = data::generate_synthetic_dataset(small_synth());
  return ds;
}

std::vector<Tensor> params_of(model::BrainDecoder& m) {
  std::vector<Tensor> out;
  model::visit_tensors(m, [&](const std::string&, Tensor& t, bool) { out.push_back(t); });
  return out;
}

}  // namespace

TEST(Batches, CoverEveryIndexOnceAndAvoidSingletons) {
  Rng rng(1);
  const auto b = training::detail::make_batches(33, 8, rng);
  ASSERT_EQ(b.size(), 4u);
  EXPECT_EQ(b.back().size(), 9u);
  std::multiset<std::size_t> seen;
  for (const auto& batch : b) seen.insert(batch.begin(), batch.end());
  EXPECT_EQ(seen.size(), 33u);
  for (std::size_t i = 0; i < 33; ++i) EXPECT_EQ(seen.count(i), 1u);
  Rng r1(4), r2(4);
  EXPECT_EQ(training::detail::make_batches(20, 6, r1), training::detail::make_batches(20, 6, r2));
  Rng r3(5);
  EXPECT_EQ(training::detail::make_batches(12, 6, r3).size(), 2u);
}

TEST(TrainConfigValidation, RejectsBadValues) {
  auto c = small_train();
  c.batch_size = 1;
  EXPECT_THROW(validate(c), Error);
  c = small_train();
  c.early_stop_patience = 0;
  EXPECT_THROW(validate(c), Error);
  c = small_train();
  c.max_epochs = -1;
  EXPECT_THROW(validate(c), Error);
}

TEST(Pretrain, ReducesReconstructionLossAndLeavesHeadsUntouched) {
  const auto& ds = dataset();
  Rng rng(7);
  auto m = model::build_model(small_model(), ds.atlas, rng);
  std::vector<const data::Scan*> sentences;
  for (const auto& s : ds.sentence_scans) sentences.push_back(&s);
  const double before = mean_reconstruction_loss(m, sentences);
  auto cfg = small_train();
  cfg.pretrain_epochs = 30;
  auto r = pretrain(m, sentences, cfg, rng);
  EXPECT_EQ(r.log.size(), 30u);
  EXPECT_LT(mean_reconstruction_loss(r.model, sentences), before);
  EXPECT_EQ(r.model.regression->weights, m.regression->weights);
  EXPECT_EQ(r.model.class_output->weights, m.class_output->weights);
  EXPECT_EQ(r.model.class_hidden->dense.weights, m.class_hidden->dense.weights);
}

TEST(Pretrain, TooFewSentenceScansWarns) {
  const auto& ds = dataset();
  Rng rng(8);
  auto m = model::build_model(small_model(), ds.atlas, rng);
  const data::Scan* one[] = {&ds.sentence_scans.front()};
  auto r = pretrain(m, one, small_train(), rng);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(params_of(r.model), params_of(m));
}

TEST(Pretrain, RequiresAutoencoder) {
  const auto& ds = dataset();
  auto mc = small_model();
  mc.autoencoder = false;
  Rng rng(9);
  auto m = model::build_model(mc, ds.atlas, rng);
  std::vector<const data::Scan*> sentences;
  for (const auto& s : ds.sentence_scans) sentences.push_back(&s);
  EXPECT_THROW(pretrain(m, sentences, small_train(), rng), Error);
}

TEST(MeanTrackerUpdate, MeansMatchActivations) {
  const auto& ds = dataset();
  Rng rng(10);
  auto mc = small_model();
  auto m = model::build_model(mc, ds.atlas, rng);
  std::vector<const data::Scan*> one_each;
  for (int w = 0; w < 6; ++w)
    for (const auto& s : ds.word_scans)
      if (s.word_index == w) {
        one_each.push_back(&s);
        break;
      }
  auto tr = update_mean_tracker(m, one_each, {model::Layer::latent}, 4);
  EXPECT_EQ(tr.epoch_stamp, 4);
  const auto acts = model::infer(m, one_each);
  for (std::size_t i = 0; i < one_each.size(); ++i) {
    const auto w = static_cast<std::size_t>(*one_each[i]->word_index);
    for (std::size_t j = 0; j < 12; ++j) EXPECT_DOUBLE_EQ(tr.means.at(model::Layer::latent)(w, j), acts.latent(i, j));
  }
  // duplicated scans leave the mean unchanged
  auto doubled = one_each;
  doubled.insert(doubled.end(), one_each.begin(), one_each.end());
  auto tr2 = update_mean_tracker(m, doubled, {model::Layer::latent});
  const auto& a = tr.means.at(model::Layer::latent);
  const auto& b = tr2.means.at(model::Layer::latent);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);

  one_each.pop_back();
  try {
    update_mean_tracker(m, one_each, {model::Layer::latent});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::tracker_state);
  }
}

TEST(TrainSupervised, ZeroEpochsReturnsInitialModel) {
  const auto& ds = dataset();
  Rng rng(11);
  auto m = model::build_model(small_model(), ds.atlas, rng);
  auto scans = data::scans_of(ds.word_scans, {"S1"});
  const Tensor emb = data::embedding_matrix(ds.embeddings, ds.vocabulary);
  auto cfg = small_train();
  cfg.max_epochs = 0;
  auto r = train_supervised(m, {scans, {}, &emb, &ds.vocabulary}, cfg, {}, rng);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.best_epoch, 0);
  EXPECT_EQ(params_of(r.model), params_of(m));
}

TEST(TrainRotation, PhasesMonitorHoldoutAndDeterminism) {
  const auto& ds = dataset();
  const auto plan = data::leave_one_out_splits(ds, "S4");
  const auto& split = plan.rotations.front();
  const auto run = [&] { return train_rotation(ds, split, "S4", small_model(), small_train(), {}, 17); };
  auto a = run();
  auto b = run();

  EXPECT_EQ(a.test_subject, "S1");
  EXPECT_EQ(a.gradient_subjects, (std::vector<std::string>{"S2", "S3"}));
  for (const auto* s : a.test_scans) EXPECT_EQ(s->subject_id, "S1");

  std::set<std::string> phases;
  int prev_stamp = -1;
  for (const auto& e : a.training.log) {
    phases.insert(to_string(e.phase));
    if (e.phase == Phase::phase2) {
      EXPECT_EQ(e.tracker_stamp, e.epoch - 1);  // means from the previous epoch
      EXPECT_GT(e.tracker_stamp, prev_stamp);
      prev_stamp = e.tracker_stamp;
    }
  }
  EXPECT_TRUE(phases.count("pretrain"));
  EXPECT_TRUE(phases.count("phase1"));
  EXPECT_EQ(a.training.log.front().epoch, 1);

  ASSERT_EQ(a.training.log.size(), b.training.log.size());
  for (std::size_t i = 0; i < a.training.log.size(); ++i) {
    EXPECT_EQ(a.training.log[i].train_loss.total, b.training.log[i].train_loss.total);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.training.log[i].val_metric),
              std::bit_cast<std::uint64_t>(b.training.log[i].val_metric));
  }
  EXPECT_EQ(params_of(a.training.model), params_of(b.training.model));
}

TEST(TrainRotation, TestSubjectNeverTrains) {
  const auto& ds = dataset();
  data::Split bad{{"S1", "S2"}, "S2"};
  EXPECT_THROW(train_rotation(ds, bad, "S1", small_model(), small_train(), {}, 1), Error);
  auto mc = small_model();
  mc.vocab_size = 5;
  EXPECT_THROW(train_rotation(ds, data::Split{{"S1", "S2"}, "S3"}, "S1", mc, small_train(), {}, 1), Error);
}

TEST(LeaveOneOut, RotationsAreDisjointAndParallelMatchesSerial) {
  const auto& ds = dataset();
  auto cfg = small_train();
  cfg.pretrain_epochs = 0;
  cfg.max_epochs = 3;
  LeaveOneOutOptions opts;
  opts.validation_subject = "S4";
  const auto serial = run_leave_one_out(ds, cfg, {}, small_model(), opts);
  ASSERT_EQ(serial.size(), 3u);
  for (const auto& r : serial) {
    EXPECT_NE(r.test_subject, "S4");
    EXPECT_EQ(r.monitor_subject, "S4");
    for (const auto& g : r.gradient_subjects) {
      EXPECT_NE(g, r.test_subject);
      EXPECT_NE(g, r.monitor_subject);
    }
    std::set<const data::Scan*> test(r.test_scans.begin(), r.test_scans.end());
    for (const auto* s : data::scans_of(ds.word_scans, r.gradient_subjects)) EXPECT_FALSE(test.count(s));
  }
  opts.parallel_rotations = 3;
  auto parallel = run_leave_one_out(ds, cfg, {}, small_model(), opts);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(parallel[i].test_subject, serial[i].test_subject);
    EXPECT_EQ(params_of(parallel[i].training.model), params_of(const_cast<model::BrainDecoder&>(serial[i].training.model)));
  }
}

TEST(LeaveOneOut, ValidationRotationUsesAnotherMonitor) {
  EXPECT_EQ(monitor_subject_for({"S1", "S2", "S3"}, "S3", "S3"), "S2");
  EXPECT_EQ(monitor_subject_for({"S1", "S2", "S3"}, "S3", "S1"), "S3");
  EXPECT_THROW(monitor_subject_for({"S1"}, "S1", "S1"), Error);
}
