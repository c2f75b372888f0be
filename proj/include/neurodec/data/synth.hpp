#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <random>

#include "neurodec/data/dataset.hpp"

namespace neurodec::data {

struct SynthConfig {
  int n_subjects = 6;
  int n_words = 20;
  int n_paradigms = 3;
  int total_voxels = 2000;
  int n_rois = 20;
  int concept_dim = 16;
  int embedding_dim = 32;
  int sentence_scans_per_subject = 30;
  double signal_to_noise = 2.0;
  double subject_mixing = 0.3;
  double paradigm_scale = 0.5;
  double embedding_noise = 0.3;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string>& builtin_nouns() {
  static const std::vector<std::string> nouns = {
      "apartment", "ball",     "bear",     "bed",      "bird",     "boat",      "book",     "bread",
      "bridge",    "camera",   "car",      "castle",   "cat",      "chair",     "church",   "cloud",
      "coffee",    "computer", "desert",   "doctor",   "dog",      "door",      "engine",   "farm",
      "fish",      "flower",   "forest",   "garden",   "glass",    "guitar",    "hammer",   "horse",
      "house",     "island",   "jungle",   "king",     "kitchen",  "knife",     "lake",     "lamp",
      "letter",    "library",  "machine",  "market",   "money",    "mountain",  "music",    "ocean",
      "painting",  "piano",    "planet",   "prison",   "river",    "road",      "school",   "ship",
      "soldier",   "storm",    "table",    "teacher",  "tower",    "train",     "tree",     "village",
      "violin",    "weather",  "window",   "winter",
  };
  return nouns;
}

inline std::string subject_name(int s) { return "S" + std::to_string(s + 1); }

inline void validate(const SynthConfig& c) {
  require(c.n_subjects >= 1 && c.n_words >= 1 && c.n_paradigms >= 1 && c.n_rois >= 1, ErrorKind::config,
          "synthetic config needs at least one subject, word, paradigm and ROI");
  require(c.total_voxels >= c.n_rois, ErrorKind::config, "n_rois exceeds total_voxels");
  const int roi_size = c.total_voxels / c.n_rois;
  require(c.concept_dim >= 1 && c.concept_dim <= roi_size * c.n_rois, ErrorKind::config,
          "concept_dim must be in [1, ROI size * n_rois]");
  require(c.embedding_dim >= 1, ErrorKind::config, "embedding_dim must be >= 1");
  require(c.signal_to_noise > 0.0, ErrorKind::config, "signal_to_noise must be > 0");
  require(c.subject_mixing >= 0.0 && c.subject_mixing <= 1.0, ErrorKind::config, "subject_mixing must be in [0,1]");
  require(c.sentence_scans_per_subject >= 0, ErrorKind::config, "sentence_scans_per_subject must be >= 0");
}

// Linear-Gaussian generator: scan(s, w, p) = M_s c_w + offset_p + noise / snr
// with M_s = (1 - mixing) M_shared + mixing M_s_private restricted to
// ROI-covered voxels. Every random draw happens in a fixed order, so the
// result is a pure function of the config.
inline Dataset generate_synthetic_dataset(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto T = static_cast<std::size_t>(cfg.total_voxels);
  const auto R = static_cast<std::size_t>(cfg.n_rois);
  const auto C = static_cast<std::size_t>(cfg.concept_dim);
  const auto E = static_cast<std::size_t>(cfg.embedding_dim);
  const auto W = static_cast<std::size_t>(cfg.n_words);
  const double noise_scale = 1.0 / cfg.signal_to_noise;

  Dataset ds;
  ds.atlas.total_voxels = T;
  std::vector<std::size_t> perm(T);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t roi_size = T / R;
  for (std::size_t r = 0; r < R; ++r) {
    Roi roi;
    char name[32];
    std::snprintf(name, sizeof name, "roi_%02zu", r + 1);
    roi.name = name;
    roi.voxel_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(r * roi_size),
                             perm.begin() + static_cast<std::ptrdiff_t>((r + 1) * roi_size));
    std::sort(roi.voxel_indices.begin(), roi.voxel_indices.end());
    ds.atlas.rois.push_back(std::move(roi));
  }
  const auto covered = ds.atlas.covered_indices();
  const std::size_t V = covered.size();

  const auto& nouns = builtin_nouns();
  for (std::size_t w = 0; w < W; ++w)
    ds.vocabulary.words.push_back(w < nouns.size() ? nouns[w] : "word" + std::to_string(w));

  Tensor concepts = Tensor::matrix(W, C);
  for (std::size_t w = 0; w < W; ++w) {
    auto row = concepts.row(w);
    for (double& x : row) x = gauss(rng);
    const double n = norm(row);
    for (double& x : row) x /= n;
  }

  Tensor shared = Tensor::matrix(V, C);
  for (double& x : shared.values) x = gauss(rng);
  std::vector<Tensor> subject_maps;
  for (int s = 0; s < cfg.n_subjects; ++s) {
    Tensor m = Tensor::matrix(V, C);
    for (std::size_t i = 0; i < m.size(); ++i)
      m[i] = (1.0 - cfg.subject_mixing) * shared[i] + cfg.subject_mixing * gauss(rng);
    subject_maps.push_back(std::move(m));
  }

  Tensor offsets = Tensor::matrix(static_cast<std::size_t>(cfg.n_paradigms), V);
  for (double& x : offsets.values) x = cfg.paradigm_scale * gauss(rng);

  const auto emit = [&](int s, std::span<const double> code, const double* offset) {
    const Tensor& m = subject_maps[static_cast<std::size_t>(s)];
    Tensor voxels = Tensor::vector(T);
    for (std::size_t i = 0; i < T; ++i) voxels[i] = noise_scale * gauss(rng);
    for (std::size_t k = 0; k < V; ++k) {
      double signal = dot(m.row(k), code);
      if (offset) signal += offset[k];
      voxels[covered[k]] += signal;
    }
    return voxels;
  };

  for (int s = 0; s < cfg.n_subjects; ++s)
    for (std::size_t w = 0; w < W; ++w)
      for (int p = 0; p < cfg.n_paradigms; ++p) {
        Scan scan;
        scan.voxels = emit(s, concepts.row(w), offsets.row(static_cast<std::size_t>(p)).data());
        scan.subject_id = subject_name(s);
        scan.word_index = static_cast<int>(w);
        scan.paradigm = p;
        ds.word_scans.push_back(std::move(scan));
      }

  std::uniform_int_distribution<std::size_t> pick_word(0, W - 1);
  std::uniform_real_distribution<double> mix_weight(0.2, 1.0);
  for (int s = 0; s < cfg.n_subjects; ++s)
    for (int k = 0; k < cfg.sentence_scans_per_subject; ++k) {
      std::vector<double> mixture(C, 0.0);
      for (int j = 0; j < 3; ++j) {
        const auto w = pick_word(rng);
        const double a = mix_weight(rng);
        for (std::size_t c = 0; c < C; ++c) mixture[c] += a * concepts(w, c);
      }
      const double n = norm(mixture);
      if (n > 0.0)
        for (double& x : mixture) x /= n;
      Scan scan;
      scan.voxels = emit(s, mixture, nullptr);
      scan.subject_id = subject_name(s);
      ds.sentence_scans.push_back(std::move(scan));
    }

  // Embeddings: a random projection of the concept plus isotropic noise.
  Tensor projection = Tensor::matrix(E, C);
  const double proj_sd = 1.0 / std::sqrt(static_cast<double>(C));
  for (double& x : projection.values) x = proj_sd * gauss(rng);
  const double noise_sd = cfg.embedding_noise / std::sqrt(static_cast<double>(E));
  ds.embeddings = EmbeddingTable(E);
  for (std::size_t w = 0; w < W; ++w) {
    Tensor e = Tensor::vector(E);
    for (std::size_t i = 0; i < E; ++i) e[i] = dot(projection.row(i), concepts.row(w)) + noise_sd * gauss(rng);
    ds.embeddings.insert(ds.vocabulary.words[w], std::move(e));
  }
  return ds;
}

}  // namespace neurodec::data
