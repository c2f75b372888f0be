#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "neurodec/config.hpp"
#include "neurodec/model/decoder.hpp"

namespace neurodec::model {

inline constexpr const char* kCheckpointMagic = "neurodec-checkpoint 1";

// Layout: a text header (magic line, `[model]` config keys, `[atlas]` in the
// atlas file format, `[tensors]` with one `name dim...` line per tensor,
// then `end`), followed by every tensor's values as little-endian float64 in
// header order.
inline void save_checkpoint(const std::filesystem::path& path, const BrainDecoder& m) {
  if (path.has_parent_path()) text::make_directories(path.parent_path());
  auto out = text::open_out(path.string(), /*binary=*/true);
  out << kCheckpointMagic << "\n[model]\n";
  config::RunConfig rc;
  rc.model = m.config;
  std::istringstream all(config::serialize(rc));
  for (std::string line; std::getline(all, line);)
    if (line.rfind("model.", 0) == 0) out << line.substr(6) << '\n';
  out << "[atlas]\n";
  data::write_atlas(out, m.atlas);
  out << "[tensors]\n";
  visit_tensors(m, [&](const std::string& name, const Tensor& t, bool) {
    out << name;
    for (auto d : t.shape) out << ' ' << d;
    out << '\n';
  });
  out << "end\n";
  visit_tensors(m, [&](const std::string&, const Tensor& t, bool) {
    for (double v : t.values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
      out.write(b, 8);
    }
  });
  require(static_cast<bool>(out), ErrorKind::io, "failed writing checkpoint " + path.string());
}

inline BrainDecoder load_checkpoint(const std::filesystem::path& path) {
  auto in = text::open_in(path.string(), /*binary=*/true);
  std::string line;
  require(std::getline(in, line) && line == kCheckpointMagic, ErrorKind::format,
          path.string() + " is not a checkpoint");
  require(std::getline(in, line) && line == "[model]", ErrorKind::format, "checkpoint: missing [model]");
  config::RunConfig rc;
  while (std::getline(in, line) && line != "[atlas]") config::apply_text(rc, "[model]\n" + line);
  require(line == "[atlas]", ErrorKind::format, "checkpoint: missing [atlas]");
  std::string atlas_text;
  while (std::getline(in, line) && line != "[tensors]") atlas_text += line + '\n';
  require(line == "[tensors]", ErrorKind::format, "checkpoint: missing [tensors]");
  std::istringstream atlas_in(atlas_text);
  const data::Atlas atlas = data::parse_atlas(atlas_in);
  validate(rc.model);

  std::vector<std::pair<std::string, std::vector<std::size_t>>> header;
  while (std::getline(in, line) && line != "end") {
    const auto parts = text::split_whitespace(line);
    require(!parts.empty(), ErrorKind::format, "checkpoint: empty tensor line");
    std::vector<std::size_t> shape;
    for (std::size_t i = 1; i < parts.size(); ++i)
      shape.push_back(static_cast<std::size_t>(text::parse_int(parts[i], "tensor dimension")));
    header.emplace_back(parts[0], std::move(shape));
  }
  require(line == "end", ErrorKind::format, "checkpoint: missing end marker");

  Rng unused(0);
  BrainDecoder m = build_model(rc.model, atlas, unused);
  std::size_t i = 0;
  visit_tensors(m, [&](const std::string& name, Tensor& t, bool) {
    require(i < header.size(), ErrorKind::corruption, "checkpoint lacks tensor " + name);
    require(header[i].first == name && header[i].second == t.shape, ErrorKind::corruption,
            "checkpoint tensor " + header[i].first + " " + Tensor::shape_string(header[i].second) +
                " does not match expected " + name + " " + t.shape_string());
    char b[8];
    for (double& v : t.values) {
      in.read(b, 8);
      require(in.gcount() == 8, ErrorKind::corruption, "checkpoint truncated in " + name);
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[k])) << (8 * k);
      v = std::bit_cast<double>(bits);
    }
    ++i;
  });
  require(i == header.size(), ErrorKind::corruption, "checkpoint has extra tensors");
  require(in.peek() == std::char_traits<char>::eof(), ErrorKind::corruption, "checkpoint has trailing bytes");
  return m;
}

}  // namespace neurodec::model
