#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "neurodec/data/synth.hpp"
#include "neurodec/model/checkpoint.hpp"

using namespace neurodec;
using namespace neurodec::model;
namespace fs = std::filesystem;

namespace {

data::Atlas toy_atlas() {
  data::Atlas a;
  a.total_voxels = 40;
  a.rois = {{"v1", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}}, {"v2", {12, 13, 14, 15, 16, 17}}, {"v3", {20, 22, 24, 26, 28, 30, 32, 34}}};
  return a;
}

ModelConfig toy_config() {
  ModelConfig c;
  c.roi_divisor = 3;
  c.hidden1_size = 9;
  c.latent_size = 6;
  c.embedding_dim = 5;
  c.vocab_size = 7;
  c.regression_head = true;
  c.classification_head = true;
  return c;
}

Tensor random_batch(std::size_t n, std::size_t width, Rng& rng) {
  Tensor t = Tensor::matrix(n, width);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& v : t.values) v = g(rng);
  return t;
}

// Gives batch norm non-trivial running statistics.
void warm_up(BrainDecoder& m, Rng& rng) {
  for (int i = 0; i < 5; ++i) forward(m, random_batch(8, m.atlas.total_voxels, rng), nn::Mode::train, rng);
}

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape, b.shape);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "element " << i;
}

}  // namespace

TEST(Model, RoiOutputWidths) {
  EXPECT_EQ(roi_output_width(45, 20), 2u);
  EXPECT_EQ(roi_output_width(10, 20), 1u);
  EXPECT_EQ(roi_output_width(100, 20), 5u);
}

TEST(Model, DeskAtlasConcatWidth) {
  data::SynthConfig sc;
  const auto ds = data::generate_synthetic_dataset(sc);
  ModelConfig c;
  EXPECT_EQ(roi_concat_width(c, ds.atlas), 100u);
}

TEST(Model, FullScaleAtlasBuildsOneLayerPerRoi) {
  data::Atlas a;
  a.total_voxels = 65730;
  for (std::size_t r = 0, next = 0; r < 333; ++r) {
    data::Roi roi{"r" + std::to_string(r), {}};
    for (std::size_t i = 0; i < 197; ++i) roi.voxel_indices.push_back(next++);
    a.rois.push_back(std::move(roi));
  }
  ModelConfig c;
  c.hidden1_size = 4;
  c.latent_size = 3;
  c.embedding_dim = 3;
  c.autoencoder = false;
  Rng rng(0);
  const auto m = build_model(c, a, rng);
  EXPECT_EQ(m.roi_layers.size(), 333u);
  EXPECT_EQ(m.roi_layers.front().out(), 9u);
}

TEST(Model, ShapesAndEncoderWidth) {
  Rng rng(1);
  auto m = build_model(toy_config(), toy_atlas(), rng);
  const auto a = forward(m, random_batch(4, 40, rng), nn::Mode::train, rng);
  EXPECT_EQ(a.roi_concat.cols(), 3u + 2u + 2u);
  EXPECT_EQ(a.hidden1.shape, (std::vector<std::size_t>{4, 9}));
  EXPECT_EQ(a.latent.shape, (std::vector<std::size_t>{4, 6}));
  EXPECT_EQ(a.regression_out->shape, (std::vector<std::size_t>{4, 5}));
  EXPECT_EQ(a.class_probs->shape, (std::vector<std::size_t>{4, 7}));
  EXPECT_EQ(a.reconstruction->shape, (std::vector<std::size_t>{4, 24}));
  EXPECT_EQ(a.reconstruction_target.shape, a.reconstruction->shape);
}

TEST(Model, InferTwiceIsIdenticalAndProbabilitiesNormalized) {
  Rng rng(2);
  auto m = build_model(toy_config(), toy_atlas(), rng);
  warm_up(m, rng);
  const Tensor x = random_batch(5, 40, rng);
  Rng r1(0), r2(99);
  const auto a = forward(m, x, nn::Mode::infer, r1);
  const auto b = forward(m, x, nn::Mode::infer, r2);
  EXPECT_EQ(a.latent, b.latent);
  EXPECT_EQ(*a.class_probs, *b.class_probs);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (double p : a.class_probs->row(r)) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Model, PaddingInvarianceIsExact) {
  Rng rng(3);
  auto m = build_model(toy_config(), toy_atlas(), rng);
  warm_up(m, rng);
  const Tensor x = random_batch(4, 40, rng);
  Tensor y = x;
  const auto covered = m.atlas.covered_indices();
  for (std::size_t v = 0; v < 40; ++v)
    if (!std::binary_search(covered.begin(), covered.end(), v))
      for (std::size_t b = 0; b < 4; ++b) y(b, v) = 1e6 * static_cast<double>(v + b + 1);
  for (auto mode : {nn::Mode::infer, nn::Mode::train}) {
    auto m1 = m, m2 = m;
    Rng r1(7), r2(7);
    const auto a = forward(m1, x, mode, r1);
    const auto b = forward(m2, y, mode, r2);
    EXPECT_EQ(a.roi_concat, b.roi_concat);
    EXPECT_EQ(a.hidden1, b.hidden1);
    EXPECT_EQ(a.latent, b.latent);
    EXPECT_EQ(*a.regression_out, *b.regression_out);
    EXPECT_EQ(*a.class_probs, *b.class_probs);
    EXPECT_EQ(*a.reconstruction, *b.reconstruction);
  }
}

TEST(Model, PaddingInvarianceThroughScanAssembly) {
  // scans of different raw lengths, zero-padded, standardized over covered voxels only
  Rng rng(4);
  auto m = build_model(toy_config(), toy_atlas(), rng);
  warm_up(m, rng);
  const Tensor raw = random_batch(1, 35, rng);
  data::Scan shorter{Tensor::from(raw.values), "S1", 0, 0};
  shorter.voxels = data::pad_scan(shorter.voxels, 40);
  data::Scan longer = shorter;
  for (std::size_t v = 35; v < 40; ++v) longer.voxels[v] = 42.0;
  longer.voxels[10] = -7.0;  // uncovered
  const data::Scan* a[] = {&shorter};
  const data::Scan* b[] = {&longer};
  EXPECT_EQ(infer(m, a).latent, infer(m, b).latent);
}

TEST(Model, InferIsBatchSizeIndependent) {
  Rng rng(5);
  auto m = build_model(toy_config(), toy_atlas(), rng);
  warm_up(m, rng);
  const Tensor x = random_batch(6, 40, rng);
  Rng unused(0);
  const auto batch = forward(m, x, nn::Mode::infer, unused);
  for (std::size_t r = 0; r < 6; ++r) {
    const std::vector<std::size_t> row{r};
    const auto alone = forward(m, select_rows(x, row), nn::Mode::infer, unused);
    for (std::size_t j = 0; j < 7; ++j) EXPECT_NEAR((*alone.class_probs)(0, j), (*batch.class_probs)(r, j), 1e-12);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR((*alone.regression_out)(0, j), (*batch.regression_out)(r, j), 1e-12);
  }
}

TEST(Model, RoiPermutationLeavesHeadsUnchanged) {
  Rng rng(6);
  auto m = build_model(toy_config(), toy_atlas(), rng);
  warm_up(m, rng);
  const std::vector<std::size_t> perm{2, 0, 1};  // new position p holds old ROI perm[p]

  BrainDecoder p = m;
  std::vector<std::size_t> old_offset, width;
  for (std::size_t r = 0, off = 0; r < 3; ++r) {
    old_offset.push_back(off);
    width.push_back(m.roi_layers[r].out());
    off += width.back();
  }
  std::vector<std::size_t> column_map;  // new concat column -> old concat column
  for (std::size_t q : perm)
    for (std::size_t k = 0; k < width[q]; ++k) column_map.push_back(old_offset[q] + k);

  for (std::size_t i = 0; i < 3; ++i) {
    p.atlas.rois[i] = m.atlas.rois[perm[i]];
    p.roi_layers[i] = m.roi_layers[perm[i]];
    p.encoder->outputs[i] = m.encoder->outputs[perm[i]];
  }
  auto& w = p.hidden1.dense.weights;
  for (std::size_t o = 0; o < w.rows(); ++o)
    for (std::size_t c = 0; c < column_map.size(); ++c) w(o, c) = m.hidden1.dense.weights(o, column_map[c]);
  auto& cb = *p.encoder->concat;
  const auto& ob = *m.encoder->concat;
  for (std::size_t c = 0; c < column_map.size(); ++c) {
    const std::size_t src = column_map[c];
    for (std::size_t i = 0; i < cb.dense.weights.cols(); ++i) cb.dense.weights(c, i) = ob.dense.weights(src, i);
    cb.dense.bias[c] = ob.dense.bias[src];
    cb.bn.gain[c] = ob.bn.gain[src];
    cb.bn.shift[c] = ob.bn.shift[src];
    cb.bn.running_mean[c] = ob.bn.running_mean[src];
    cb.bn.running_var[c] = ob.bn.running_var[src];
  }

  const Tensor x = random_batch(4, 40, rng);
  Rng u(0);
  const auto a = forward(m, x, nn::Mode::infer, u);
  const auto b = forward(p, x, nn::Mode::infer, u);
  expect_close(*a.class_probs, *b.class_probs, 1e-12);
  expect_close(*a.regression_out, *b.regression_out, 1e-12);
}

TEST(Model, UnpaddedScanIsSizeError) {
  Rng rng(7);
  auto m = build_model(toy_config(), toy_atlas(), rng);
  data::Scan s{Tensor::vector(39), "S1", 0, 0};
  const data::Scan* one[] = {&s};
  try {
    infer(m, one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::size);
  }
}

TEST(Model, ConfigNeedsAHead) {
  auto c = toy_config();
  c.regression_head = c.classification_head = false;
  EXPECT_THROW(validate(c), Error);
}

TEST(TopK, OrderingTiesAndRange) {
  const std::vector<double> probs{0.1, 0.2, 0.2, 0.05, 0.0, 0.0, 0.0, 0.45};
  const auto top = topk_from_probs(probs, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].word_index, 7);
  EXPECT_EQ(top[1].word_index, 1);
  EXPECT_EQ(top[2].word_index, 2);
  auto all = topk_from_probs(probs, 8);
  std::vector<int> ids;
  for (const auto& p : all) ids.push_back(p.word_index);
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(all[5].word_index, 4);  // zero-probability ties in index order
  EXPECT_THROW(topk_from_probs(probs, 0), Error);
  EXPECT_THROW(topk_from_probs(probs, 9), Error);
}

TEST(TopK, OneHotFirst) {
  std::vector<double> probs(10, 0.0);
  probs[7] = 1.0;
  EXPECT_EQ(topk_from_probs(probs, 5).front().word_index, 7);
}

TEST(TopK, MonotoneInK) {
  Rng rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> probs(12);
    for (double& p : probs) p = std::floor(u(rng) * 5.0);  // many ties
    for (int k = 1; k < 12; ++k) {
      const auto a = topk_from_probs(probs, k), b = topk_from_probs(probs, k + 1);
      for (int i = 0; i < k; ++i) EXPECT_EQ(a[static_cast<std::size_t>(i)].word_index, b[static_cast<std::size_t>(i)].word_index);
    }
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(9);
  auto m = build_model(toy_config(), toy_atlas(), rng);
  warm_up(m, rng);
  const fs::path path = fs::temp_directory_path() / "neurodec_test_ckpt" / "m.ckpt";
  save_checkpoint(path, m);
  auto back = load_checkpoint(path);
  EXPECT_EQ(back.atlas, m.atlas);
  std::vector<Tensor> a, b;
  visit_tensors(m, [&](const std::string&, Tensor& t, bool) { a.push_back(t); });
  visit_tensors(back, [&](const std::string&, Tensor& t, bool) { b.push_back(t); });
  EXPECT_EQ(a, b);
  EXPECT_EQ(back.config.hidden1_size, 9);
  EXPECT_EQ(back.config.regression_head, true);
}

TEST(Checkpoint, ShapeDriftAndTruncationRejected) {
  Rng rng(10);
  auto m = build_model(toy_config(), toy_atlas(), rng);
  const fs::path dir = fs::temp_directory_path() / "neurodec_test_ckpt_bad";
  save_checkpoint(dir / "m.ckpt", m);
  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  std::string drifted = bytes;
  const auto pos = drifted.find("hidden1.dense.weights 9 7");
  ASSERT_NE(pos, std::string::npos);
  drifted.replace(pos, 25, "hidden1.dense.weights 7 9");
  std::ofstream(dir / "drift.ckpt", std::ios::binary) << drifted;
  try {
    load_checkpoint(dir / "drift.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::corruption);
  }

  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), Error);
  std::ofstream(dir / "junk.ckpt", std::ios::binary) << "not a checkpoint\n";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), Error);
}
