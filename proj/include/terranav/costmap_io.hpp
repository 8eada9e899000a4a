#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "terranav/errors.hpp"
#include "terranav/geometry.hpp"
#include "terranav/traversability.hpp"

namespace terranav {

inline constexpr std::uint8_t kPgmFree = 0;
inline constexpr std::uint8_t kPgmLethal = 254;
inline constexpr std::uint8_t kPgmUnknown = 255;

/// Pixel encoding: 0 = free, 1-253 = scaled soft cost, 254 = LETHAL,
/// 255 = UNKNOWN.
inline std::uint8_t cell_to_pixel(const CellAssessment& c) {
  if (c.kind == CellKind::Unknown) return kPgmUnknown;
  if (c.kind == CellKind::Lethal) return kPgmLethal;
  if (c.cost <= 0.0) return kPgmFree;
  const long v = std::lround(c.cost * 253.0);
  return static_cast<std::uint8_t>(std::clamp(v, 1L, 253L));
}

/// Writes the grid as binary 8-bit PGM (row j = 0 first) plus a sidecar
/// "<path>.meta" text file carrying origin, resolution, frame and stamp.
inline void write_costmap_pgm(const std::string& path,
                              const Grid2D<CellAssessment>& grid,
                              const std::string& frame, double stamp) {
  std::ofstream pgm(path, std::ios::binary);
  if (!pgm) throw Error("write_costmap_pgm: cannot open " + path);
  pgm << "P5\n" << grid.width() << " " << grid.height() << "\n255\n";
  std::vector<std::uint8_t> row(grid.width());
  for (int j = 0; j < grid.height(); ++j) {
    for (int i = 0; i < grid.width(); ++i) row[i] = cell_to_pixel(grid.at(i, j));
    pgm.write(reinterpret_cast<const char*>(row.data()), row.size());
  }

  std::ofstream meta(path + ".meta");
  if (!meta) throw Error("write_costmap_pgm: cannot open " + path + ".meta");
  meta << "origin_x " << grid.origin_x() << "\n"
       << "origin_y " << grid.origin_y() << "\n"
       << "resolution " << grid.resolution() << "\n"
       << "width " << grid.width() << "\n"
       << "height " << grid.height() << "\n"
       << "frame " << frame << "\n"
       << "stamp " << stamp << "\n";
}

/// Reads back the pixel matrix of a PGM written by write_costmap_pgm.
inline std::vector<std::uint8_t> read_pgm(const std::string& path, int& width,
                                          int& height) {
  std::ifstream pgm(path, std::ios::binary);
  if (!pgm) throw Error("read_pgm: cannot open " + path);
  std::string magic;
  int maxval = 0;
  pgm >> magic >> width >> height >> maxval;
  if (magic != "P5" || maxval != 255 || width <= 0 || height <= 0) {
    throw Error("read_pgm: unsupported header in " + path);
  }
  pgm.get();  // single whitespace after maxval
  std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height);
  pgm.read(reinterpret_cast<char*>(data.data()), data.size());
  if (!pgm) throw Error("read_pgm: truncated pixel data in " + path);
  return data;
}

}  // namespace terranav
