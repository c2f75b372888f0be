#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "neurodec/data/scan_store.hpp"
#include "neurodec/data/splits.hpp"
#include "neurodec/data/synth.hpp"

using namespace neurodec;
using namespace neurodec::data;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::invariant;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("neurodec_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SynthConfig small_config(std::uint64_t seed = 3) {
  SynthConfig c;
  c.n_subjects = 3;
  c.n_words = 4;
  c.n_paradigms = 2;
  c.total_voxels = 60;
  c.n_rois = 4;
  c.concept_dim = 5;
  c.embedding_dim = 6;
  c.sentence_scans_per_subject = 2;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Atlas, TwoRoisLeaveOneVoxelUncovered) {
  std::istringstream in("# toy\ntotal_voxels = 4\nroi.A = 0 1\nroi.B = 2\n");
  const Atlas a = parse_atlas(in);
  ASSERT_EQ(a.rois.size(), 2u);
  EXPECT_EQ(a.covered_count(), 3u);
  EXPECT_EQ(a.covered_indices(), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Atlas, OverlapNamesBothRois) {
  std::istringstream in("total_voxels = 4\nroi.A = 0-1\nroi.B = 1 2\n");
  try {
    parse_atlas(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'A'"), std::string::npos);
    EXPECT_NE(msg.find("'B'"), std::string::npos);
  }
}

TEST(Atlas, IndexBeyondTotalIsRangeError) {
  std::istringstream in("total_voxels = 3\nroi.A = 0 3\n");
  EXPECT_EQ(kind_of([&] { parse_atlas(in); }), ErrorKind::range);
}

TEST(Atlas, WriteParseRoundTripAtScale) {
  Atlas a;
  a.total_voxels = 65730;
  std::size_t next = 0;
  for (int r = 0; r < 333; ++r) {
    Roi roi{"r" + std::to_string(r), {}};
    for (int i = 0; i < 150; ++i) roi.voxel_indices.push_back(next + static_cast<std::size_t>(i));
    next += 190;
    roi.voxel_indices.push_back(next - 5);  // a detached voxel breaks the run
    a.rois.push_back(std::move(roi));
  }
  std::stringstream buf;
  write_atlas(buf, a);
  const Atlas b = parse_atlas(buf);
  EXPECT_EQ(b.rois.size(), 333u);
  EXPECT_EQ(a, b);
}

TEST(PadScan, CopiesThenZeroFills) {
  EXPECT_EQ(pad_scan(Tensor::from({1, 2}), 4).values, (std::vector<double>{1, 2, 0, 0}));
  const Tensor same = Tensor::from({3, 4, 5});
  EXPECT_EQ(pad_scan(same, 3), same);
  const Tensor big = pad_scan(Tensor(std::vector<std::size_t>{60000}, 1.0), 65730);
  EXPECT_EQ(big.size(), 65730u);
  EXPECT_EQ(std::count(big.values.begin(), big.values.end(), 0.0), 5730);
  EXPECT_EQ(kind_of([] { pad_scan(Tensor::vector(5), 4); }), ErrorKind::size);
}

TEST(Synth, DefaultShape) {
  const auto ds = generate_synthetic_dataset(SynthConfig{});
  EXPECT_EQ(ds.word_scans.size(), 360u);
  EXPECT_EQ(ds.subjects().size(), 6u);
  EXPECT_EQ(ds.atlas.rois.size(), 20u);
  EXPECT_EQ(ds.atlas.total_voxels, 2000u);
  EXPECT_EQ(ds.vocabulary.size(), 20u);
  EXPECT_EQ(ds.embeddings.dimension(), 32u);
  std::set<std::tuple<std::string, int, int>> cells;
  for (const auto& s : ds.word_scans) {
    ASSERT_TRUE(s.paradigm.has_value());
    EXPECT_TRUE(cells.insert({s.subject_id, *s.word_index, *s.paradigm}).second);
  }
}

TEST(Synth, SameSeedBitIdenticalDifferentSeedDiffers) {
  EXPECT_EQ(generate_synthetic_dataset(small_config(9)), generate_synthetic_dataset(small_config(9)));
  EXPECT_NE(generate_synthetic_dataset(small_config(9)).word_scans[0],
            generate_synthetic_dataset(small_config(10)).word_scans[0]);
}

TEST(Synth, NoiselessAlignedSubjectsAgree) {
  auto c = small_config();
  c.signal_to_noise = 1e12;
  c.subject_mixing = 0.0;
  const auto ds = generate_synthetic_dataset(c);
  for (const auto& a : ds.word_scans)
    for (const auto& b : ds.word_scans)
      if (a.word_index == b.word_index && a.paradigm == b.paradigm) {
        for (std::size_t i = 0; i < a.voxels.size(); ++i) EXPECT_NEAR(a.voxels[i], b.voxels[i], 1e-9);
      }
}

TEST(Synth, InfeasibleConfigIsConfigError) {
  auto c = small_config();
  c.n_rois = 100;
  EXPECT_EQ(kind_of([&] { generate_synthetic_dataset(c); }), ErrorKind::config);
  c = small_config();
  c.signal_to_noise = 0.0;
  EXPECT_EQ(kind_of([&] { generate_synthetic_dataset(c); }), ErrorKind::config);
}

TEST(Splits, FifteenSubjectsGiveFourteenRotations) {
  std::vector<std::string> subjects;
  for (int i = 1; i <= 15; ++i) subjects.push_back("M" + std::to_string(i));
  const auto plan = leave_one_out_splits(subjects, "M15");
  EXPECT_EQ(plan.rotations.size(), 14u);
  for (const auto& s : plan.rotations) {
    EXPECT_NE(s.test_subject, "M15");
    EXPECT_EQ(std::count(s.train_subjects.begin(), s.train_subjects.end(), s.test_subject), 0);
    EXPECT_EQ(std::count(s.train_subjects.begin(), s.train_subjects.end(), "M15"), 1);
    std::set<std::string> all(s.train_subjects.begin(), s.train_subjects.end());
    all.insert(s.test_subject);
    EXPECT_EQ(all.size(), 15u);
  }
  EXPECT_EQ(plan.validation.test_subject, "M15");
}

TEST(Splits, TwoSubjects) {
  const auto plan = leave_one_out_splits({"S1", "S2"}, "S2");
  ASSERT_EQ(plan.rotations.size(), 1u);
  EXPECT_EQ(plan.rotations[0].test_subject, "S1");
  EXPECT_EQ(plan.rotations[0].train_subjects, (std::vector<std::string>{"S2"}));
  EXPECT_EQ(kind_of([] { leave_one_out_splits({"S1", "S2"}, "S9"); }), ErrorKind::lookup);
}

TEST(Embeddings, LoadRestrictsAndNamesMissingWords) {
  const auto dir = scratch("emb");
  const auto path = (dir / "e.txt").string();
  std::ofstream(path) << "cat 1 0 0\ndog 0 1 0\nextra 0 0 1\n";
  const auto t = load_embeddings(path, Vocabulary{{"cat", "dog"}});
  EXPECT_EQ(t.dimension(), 3u);
  EXPECT_EQ(t.size(), 2u);
  try {
    load_embeddings(path, Vocabulary{{"cat", "owl"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::lookup);
    EXPECT_NE(std::string(e.what()).find("owl"), std::string::npos);
  }
  std::ofstream(path) << "cat 1 0 0\ndog 0 1\n";
  EXPECT_EQ(kind_of([&] { load_embeddings(path, Vocabulary{{"cat", "dog"}}); }), ErrorKind::format);
}

TEST(ScanStore, RoundTripAt32Bits) {
  const auto ds = generate_synthetic_dataset(small_config());
  const auto dir = scratch("store");
  save_dataset(dir, ds);
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.atlas, ds.atlas);
  EXPECT_EQ(back.vocabulary, ds.vocabulary);
  EXPECT_EQ(back.embeddings, ds.embeddings);
  ASSERT_EQ(back.word_scans.size(), ds.word_scans.size());
  ASSERT_EQ(back.sentence_scans.size(), ds.sentence_scans.size());
  for (std::size_t i = 0; i < ds.word_scans.size(); ++i) {
    const auto& a = ds.word_scans[i];
    const auto& b = back.word_scans[i];
    EXPECT_EQ(a.subject_id, b.subject_id);
    EXPECT_EQ(a.word_index, b.word_index);
    EXPECT_EQ(a.paradigm, b.paradigm);
    for (std::size_t v = 0; v < a.voxels.size(); ++v)
      EXPECT_EQ(static_cast<float>(a.voxels[v]), static_cast<float>(b.voxels[v]));
  }
}

TEST(ScanStore, TruncatedBlobIsCorruption) {
  const auto ds = generate_synthetic_dataset(small_config());
  const auto dir = scratch("trunc");
  save_scans(dir, ds.word_scans, ds.vocabulary);
  fs::resize_file(dir / kScanBlob, fs::file_size(dir / kScanBlob) - 8);
  EXPECT_EQ(kind_of([&] { load_scans(dir, ds.vocabulary); }), ErrorKind::corruption);
  fs::resize_file(dir / kScanBlob, fs::file_size(dir / kScanBlob) - 1);
  EXPECT_EQ(kind_of([&] { load_scans(dir, ds.vocabulary); }), ErrorKind::corruption);
}

TEST(ScanStore, EmptyStore) {
  const auto dir = scratch("empty");
  save_scans(dir, std::span<const Scan>{}, Vocabulary{});
  EXPECT_EQ(fs::file_size(dir / kScanBlob), 0u);
  EXPECT_EQ(fs::file_size(dir / kScanManifest), 0u);
  EXPECT_TRUE(load_scans(dir, Vocabulary{}).empty());
}

TEST(ScanStore, LittleEndianFloat32Layout) {
  const auto dir = scratch("layout");
  Scan s{Tensor::from({1.0, -2.0}), "S1", std::nullopt, std::nullopt};
  save_scans(dir, std::span<const Scan>(&s, 1), Vocabulary{});
  std::ifstream in(dir / kScanBlob, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(bytes, (std::vector<unsigned char>{0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0}));
  std::ifstream m(dir / kScanManifest);
  std::string line;
  std::getline(m, line);
  EXPECT_EQ(line, "S1\t-\t-\t0\t2");
}
