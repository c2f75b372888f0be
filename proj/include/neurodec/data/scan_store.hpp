#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "neurodec/data/dataset.hpp"

namespace neurodec::data {

// Scan store layout:
//   scans.bin     raw little-endian IEEE-754 float32 voxel values, scans back to back
//   manifest.tsv  one line per scan: subject \t word|- \t paradigm|- \t offset \t length
// offset and length are counted in float32 elements.
inline constexpr const char* kScanBlob = "scans.bin";
inline constexpr const char* kScanManifest = "manifest.tsv";

namespace detail {

inline void put_f32_le(std::ostream& out, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  const char bytes[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                         static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline float get_f32_le(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(u);
}

}  // namespace detail

inline void save_scans(const std::filesystem::path& dir, std::span<const Scan> scans, const Vocabulary& vocab) {
  text::make_directories(dir);
  auto blob = text::open_out((dir / kScanBlob).string(), true);
  auto manifest = text::open_out((dir / kScanManifest).string());
  std::size_t offset = 0;
  for (const auto& s : scans) {
    const std::string word =
        s.word_index ? vocab.words.at(static_cast<std::size_t>(*s.word_index)) : std::string("-");
    const std::string paradigm = s.paradigm ? std::to_string(*s.paradigm) : std::string("-");
    manifest << s.subject_id << '\t' << word << '\t' << paradigm << '\t' << offset << '\t' << s.voxels.size()
             << '\n';
    for (double v : s.voxels.values) detail::put_f32_le(blob, static_cast<float>(v));
    offset += s.voxels.size();
  }
  require(static_cast<bool>(blob) && static_cast<bool>(manifest), ErrorKind::io,
          "failed writing scan store in '" + dir.string() + "'");
}

inline std::vector<Scan> load_scans(const std::filesystem::path& dir, const Vocabulary& vocab) {
  auto blob_in = text::open_in((dir / kScanBlob).string(), true);
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(blob_in)), std::istreambuf_iterator<char>());
  require(blob.size() % 4 == 0, ErrorKind::corruption,
          "scan blob size " + std::to_string(blob.size()) + " is not a multiple of 4 bytes");
  const std::size_t n_floats = blob.size() / 4;

  auto manifest = text::open_in((dir / kScanManifest).string());
  std::vector<Scan> scans;
  std::string line;
  std::size_t lineno = 0, expected_end = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto cols = text::split(line, '\t');
    require(cols.size() == 5, ErrorKind::format,
            "manifest line " + std::to_string(lineno) + " has " + std::to_string(cols.size()) + " columns");
    Scan s;
    s.subject_id = cols[0];
    if (cols[1] != "-") s.word_index = vocab.index_of(cols[1]);
    if (cols[2] != "-") s.paradigm = static_cast<int>(text::parse_int(cols[2], "paradigm"));
    const auto offset = static_cast<std::size_t>(text::parse_int(cols[3], "offset"));
    const auto length = static_cast<std::size_t>(text::parse_int(cols[4], "length"));
    require(offset + length <= n_floats, ErrorKind::corruption,
            "manifest line " + std::to_string(lineno) + " spans [" + std::to_string(offset) + ", " +
                std::to_string(offset + length) + ") but blob holds " + std::to_string(n_floats) + " values");
    s.voxels = Tensor::vector(length);
    for (std::size_t i = 0; i < length; ++i) s.voxels[i] = detail::get_f32_le(blob.data() + 4 * (offset + i));
    expected_end = std::max(expected_end, offset + length);
    scans.push_back(std::move(s));
  }
  require(expected_end == n_floats, ErrorKind::corruption,
          "scan blob holds " + std::to_string(n_floats) + " values, manifest accounts for " +
              std::to_string(expected_end));
  return scans;
}

// Dataset directory: atlas.txt, vocabulary.txt, embeddings.txt plus the scan store.
inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  text::make_directories(dir);
  save_atlas((dir / "atlas.txt").string(), ds.atlas);
  save_vocabulary((dir / "vocabulary.txt").string(), ds.vocabulary);
  save_embeddings((dir / "embeddings.txt").string(), ds.embeddings);
  std::vector<Scan> all = ds.word_scans;
  all.insert(all.end(), ds.sentence_scans.begin(), ds.sentence_scans.end());
  save_scans(dir, all, ds.vocabulary);
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.atlas = load_atlas((dir / "atlas.txt").string());
  ds.vocabulary = load_vocabulary((dir / "vocabulary.txt").string());
  ds.embeddings = load_embeddings((dir / "embeddings.txt").string(), ds.vocabulary);
  for (auto& s : load_scans(dir, ds.vocabulary)) {
    require(s.voxels.size() <= ds.atlas.total_voxels, ErrorKind::size,
            "scan of subject " + s.subject_id + " exceeds atlas size");
    s.voxels = pad_scan(s.voxels, ds.atlas.total_voxels);
    if (s.word_index) {
      require(s.paradigm.has_value(), ErrorKind::format, "word scan without paradigm for " + s.subject_id);
      ds.word_scans.push_back(std::move(s));
    } else {
      ds.sentence_scans.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace neurodec::data
