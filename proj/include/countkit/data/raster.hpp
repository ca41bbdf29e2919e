#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "countkit/error.hpp"

namespace countkit {

/// Label image: 0 is background, k + 1 marks a pixel painted by the category
/// at table index k.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;

  Raster() = default;
  Raster(int w, int h) : width(w), height(h), labels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return labels.empty(); }

  friend bool operator==(const Raster&, const Raster&) = default;
};

// Binary PGM (P5), one byte per pixel holding the label.
inline void save_pgm(const std::filesystem::path& path, const Raster& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  out << "P5\n" << r.width << " " << r.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(r.labels.data()),
            static_cast<std::streamsize>(r.labels.size()));
}

inline Raster load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open raster '" + path.string() + "'");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) {
    throw ParseError(path.string() + ": not an 8-bit binary PGM");
  }
  in.get();
  Raster r(w, h);
  in.read(reinterpret_cast<char*>(r.labels.data()), static_cast<std::streamsize>(r.labels.size()));
  if (in.gcount() != static_cast<std::streamsize>(r.labels.size())) {
    throw ParseError(path.string() + ": truncated pixel data");
  }
  return r;
}

}  // namespace countkit
