#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "neurodec/text.hpp"

namespace neurodec::data {

struct Roi {
  std::string name;
  std::vector<std::size_t> voxel_indices;

  friend bool operator==(const Roi&, const Roi&) = default;
};

// Partition of (a subset of) voxel indices into named regions. ROI order is
// the canonical order the model uses for its per-region layers.
struct Atlas {
  std::vector<Roi> rois;
  std::size_t total_voxels = 0;

  std::size_t covered_count() const {
    std::size_t n = 0;
    for (const auto& r : rois) n += r.voxel_indices.size();
    return n;
  }

  // Covered voxel indices concatenated in ROI order.
  std::vector<std::size_t> covered_indices() const {
    std::vector<std::size_t> out;
    out.reserve(covered_count());
    for (const auto& r : rois) out.insert(out.end(), r.voxel_indices.begin(), r.voxel_indices.end());
    return out;
  }

  friend bool operator==(const Atlas&, const Atlas&) = default;
};

// Throws on empty ROIs, out-of-range indices and overlapping ROIs.
inline void validate(const Atlas& atlas) {
  require(!atlas.rois.empty(), ErrorKind::format, "atlas has no ROIs");
  std::vector<int> owner(atlas.total_voxels, -1);
  for (std::size_t r = 0; r < atlas.rois.size(); ++r) {
    const auto& roi = atlas.rois[r];
    require(!roi.voxel_indices.empty(), ErrorKind::format, "ROI '" + roi.name + "' is empty");
    for (std::size_t v : roi.voxel_indices) {
      require(v < atlas.total_voxels, ErrorKind::range,
              "ROI '" + roi.name + "' index " + std::to_string(v) + " >= total_voxels " +
                  std::to_string(atlas.total_voxels));
      if (owner[v] >= 0)
        fail(ErrorKind::format, "ROIs '" + atlas.rois[static_cast<std::size_t>(owner[v])].name + "' and '" + roi.name +
                                    "' share voxel " + std::to_string(v));
      owner[v] = static_cast<int>(r);
    }
  }
}

// Format (one record per line, '#' starts a comment):
//   total_voxels = <N>
//   roi.<name> = <index or a-b range> ...
inline Atlas parse_atlas(std::istream& in) {
  Atlas atlas;
  bool have_total = false;
  std::map<std::string, bool> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto body = text::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    require(eq != std::string_view::npos, ErrorKind::format, "atlas line " + std::to_string(lineno) + " has no '='");
    const std::string key(text::trim(body.substr(0, eq)));
    const auto value = text::trim(body.substr(eq + 1));
    if (key == "total_voxels") {
      const auto n = text::parse_int(value, "total_voxels");
      require(n >= 0, ErrorKind::format, "total_voxels must be nonnegative");
      atlas.total_voxels = static_cast<std::size_t>(n);
      have_total = true;
    } else if (key.rfind("roi.", 0) == 0 && key.size() > 4) {
      Roi roi{key.substr(4), {}};
      require(!seen[roi.name], ErrorKind::format, "ROI '" + roi.name + "' defined twice");
      seen[roi.name] = true;
      for (const auto& tok : text::split_whitespace(value)) {
        const auto dash = tok.find('-', 1);
        if (dash == std::string::npos) {
          const auto v = text::parse_int(tok, "voxel index");
          require(v >= 0, ErrorKind::range, "negative voxel index in ROI '" + roi.name + "'");
          roi.voxel_indices.push_back(static_cast<std::size_t>(v));
        } else {
          const auto a = text::parse_int(std::string_view(tok).substr(0, dash), "range start");
          const auto b = text::parse_int(std::string_view(tok).substr(dash + 1), "range end");
          require(a >= 0 && b >= a, ErrorKind::format, "bad range '" + tok + "' in ROI '" + roi.name + "'");
          for (auto v = a; v <= b; ++v) roi.voxel_indices.push_back(static_cast<std::size_t>(v));
        }
      }
      atlas.rois.push_back(std::move(roi));
    } else {
      fail(ErrorKind::format, "unknown atlas key '" + key + "' on line " + std::to_string(lineno));
    }
  }
  require(have_total, ErrorKind::format, "atlas lacks total_voxels");
  validate(atlas);
  return atlas;
}

inline Atlas load_atlas(const std::string& path) {
  auto in = text::open_in(path);
  return parse_atlas(in);
}

// Writes contiguous runs as a-b ranges.
inline void write_atlas(std::ostream& out, const Atlas& atlas) {
  out << "total_voxels = " << atlas.total_voxels << '\n';
  for (const auto& roi : atlas.rois) {
    out << "roi." << roi.name << " =";
    const auto& idx = roi.voxel_indices;
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && idx[j + 1] == idx[j] + 1) ++j;
      out << ' ' << idx[i];
      if (j > i) out << '-' << idx[j];
      i = j + 1;
    }
    out << '\n';
  }
}

inline void save_atlas(const std::string& path, const Atlas& atlas) {
  auto out = text::open_out(path);
  write_atlas(out, atlas);
  require(static_cast<bool>(out), ErrorKind::io, "failed writing '" + path + "'");
}

}  // namespace neurodec::data
