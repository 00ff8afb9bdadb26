#pragma once
#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "faultface/portrait.hpp"

namespace faultface {

inline void write_pgm(const Portrait& p, std::ostream& out) {
  out << "P5\n" << kSide << ' ' << kSide << "\n255\n";
  out.write(reinterpret_cast<const char*>(p.pixels.data()), static_cast<std::streamsize>(p.pixels.size()));
}

namespace detail {

inline std::string pgm_token(std::istream& in) {
  std::string tok;
  int ch = in.get();
  for (;;) {
    while (ch != EOF && std::isspace(ch)) ch = in.get();
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
      continue;
    }
    break;
  }
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  // `ch` is the single whitespace byte that ends the header field
  return tok;
}

inline int pgm_int(std::istream& in, const char* field) {
  const auto tok = pgm_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(c); }))
    throw data_error(std::string("malformed PGM header: bad ") + field + " '" + tok + "'");
  return std::stoi(tok);
}

}  // namespace detail

/// Reads a binary 28x28 P5 image with maxval 255. Kind, label and ids are left at defaults.
inline Portrait read_pgm(std::istream& in) {
  if (detail::pgm_token(in) != "P5") throw data_error("malformed PGM header: magic is not P5");
  const int w = detail::pgm_int(in, "width");
  const int h = detail::pgm_int(in, "height");
  const int maxval = detail::pgm_int(in, "maxval");
  if (w != static_cast<int>(kSide) || h != static_cast<int>(kSide))
    throw data_error("PGM must be 28x28, got " + std::to_string(w) + "x" + std::to_string(h));
  if (maxval != 255) throw data_error("PGM maxval must be 255, got " + std::to_string(maxval));
  Portrait p;
  in.read(reinterpret_cast<char*>(p.pixels.data()), static_cast<std::streamsize>(p.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(p.pixels.size()))
    throw data_error("truncated PGM payload: " + std::to_string(in.gcount()) + " of 784 bytes");
  return p;
}

/// `<kind>_<label>_<source_id>_<index>.pgm`
inline std::string portrait_filename(const Portrait& p) {
  return std::string(name_of(p.kind)) + "_" + std::string(name_of(p.label)) + "_" + p.source_id + "_" +
         std::to_string(p.index) + ".pgm";
}

inline std::filesystem::path save_portrait(const Portrait& p, const std::filesystem::path& dir) {
  auto path = dir / portrait_filename(p);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write '" + path.string() + "'");
  write_pgm(p, out);
  return path;
}

/// Reads a portrait and recovers kind, label, source id and index from its filename.
inline Portrait load_portrait(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path.string() + "'");
  Portrait p = read_pgm(in);
  const auto stem = path.stem().string();
  const auto first = stem.find('_');
  const auto second = first == std::string::npos ? std::string::npos : stem.find('_', first + 1);
  const auto last = stem.rfind('_');
  if (second == std::string::npos || last <= second)
    throw data_error("portrait filename '" + path.filename().string() + "' does not follow kind_label_source_index");
  auto kind = parse_kind(stem.substr(0, first));
  auto label = parse_class(stem.substr(first + 1, second - first - 1));
  if (!kind || !label) throw data_error("portrait filename '" + path.filename().string() + "' has unknown kind or label");
  p.kind = *kind;
  p.label = *label;
  p.source_id = stem.substr(second + 1, last - second - 1);
  try {
    p.index = std::stoul(stem.substr(last + 1));
  } catch (const std::exception&) {
    throw data_error("portrait filename '" + path.filename().string() + "' has a bad index");
  }
  return p;
}

/// All `.pgm` portraits in a directory, sorted by filename.
inline std::vector<Portrait> load_portrait_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw data_error("not a directory: '" + dir.string() + "'");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Portrait> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_portrait(f));
  return out;
}

}  // namespace faultface
