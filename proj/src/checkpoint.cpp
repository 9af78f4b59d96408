#include "irgcn/binio.hpp"
#include "irgcn/boost.hpp"

#include <fstream>

namespace irgcn {

void write_checkpoint(const IrgcnModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("IRGM", 4);
  binio::put<std::uint16_t>(out, kCheckpointVersion);
  binio::put<std::uint64_t>(out, model.config.hash());
  binio::put_string(out, model.config.to_text());
  binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(model.input_dim));
  binio::put<std::uint8_t>(out, model.alphas_frozen ? 1 : 0);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.relations.size()));
  for (const auto& r : model.relations) {
    binio::put_string(out, r.spec.name);
    binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(r.semantics));
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(r.spec.strategies.size()));
    for (auto s : r.spec.strategies) binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(s));
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(r.layers.size()));
    for (const auto& w : r.layers) binio::put_matrix(out, w);
    for (const auto& w : r.scores) binio::put_matrix(out, w);
    binio::put<double>(out, r.alpha);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

IrgcnModel read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string what = "checkpoint " + path.string();
  binio::expect_magic(in, "IRGM", what);
  const auto version = binio::get<std::uint16_t>(in);
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported format version " + std::to_string(version));
  }
  const auto stored_hash = binio::get<std::uint64_t>(in);
  IrgcnModel model;
  model.config = parse_config(binio::get_string(in));
  if (model.config.hash() != stored_hash) throw FormatError(what + ": config hash mismatch");
  model.input_dim = static_cast<Index>(binio::get<std::uint64_t>(in));
  model.alphas_frozen = binio::get<std::uint8_t>(in) != 0;
  const auto count = binio::get<std::uint32_t>(in);
  if (count != model.config.relations.size()) throw FormatError(what + ": relation count mismatch");
  for (std::uint32_t k = 0; k < count; ++k) {
    RelationType r;
    r.spec.name = binio::get_string(in, 256);
    const auto sem = binio::get<std::uint8_t>(in);
    if (sem > 2) throw FormatError(what + ": bad semantics tag");
    r.semantics = static_cast<Semantics>(sem);
    const auto ns = binio::get<std::uint32_t>(in);
    if (ns == 0 || ns > 4) throw FormatError(what + ": bad strategy count");
    for (std::uint32_t i = 0; i < ns; ++i) {
      const auto s = binio::get<std::uint8_t>(in);
      if (s > 3) throw FormatError(what + ": bad strategy tag");
      r.spec.strategies.push_back(static_cast<Strategy>(s));
      if (semantics_of(r.spec.strategies.back()) != r.semantics) {
        throw FormatError(what + ": strategy does not match relation semantics");
      }
    }
    if (!(r.spec == model.config.relations[k])) throw FormatError(what + ": relation list disagrees with config");
    const auto nl = binio::get<std::uint32_t>(in);
    if (nl != kHiddenDims.size()) throw FormatError(what + ": unexpected layer count");
    Index in_dim = model.input_dim;
    for (std::uint32_t i = 0; i < nl; ++i) {
      r.layers.push_back(binio::get_matrix(in));
      if (r.layers.back().rows() != in_dim || r.layers.back().cols() != kHiddenDims[i]) {
        throw FormatError(what + ": layer " + std::to_string(i + 1) + " has shape " + shape_string(r.layers.back()));
      }
      in_dim = kHiddenDims[i];
    }
    for (std::uint32_t i = 0; i < ns; ++i) {
      r.scores.push_back(binio::get_matrix(in));
      if (r.scores.back().rows() != kHiddenDims.back() || r.scores.back().cols() != 1) {
        throw FormatError(what + ": score vector has shape " + shape_string(r.scores.back()));
      }
    }
    r.alpha = binio::get<double>(in);
    model.relations.push_back(std::move(r));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(what + ": trailing bytes");
  return model;
}

}  // namespace irgcn
