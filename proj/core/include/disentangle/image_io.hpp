#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace disentangle {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // row-major, [0,1]
};

/// Reads binary or ASCII PGM (P5/P2) and PPM (P6/P3). Color input is
/// converted with ITU-R BT.601 luma weights. Throws LoadError.
GrayImage read_pnm(const std::filesystem::path& path);

/// Writes an 8-bit binary PGM (P5); values are clamped to [0,1] and rounded
/// to the nearest of 256 levels. Throws IoError.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

}  // namespace disentangle
