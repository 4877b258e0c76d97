#pragma once

#include <filesystem>

#include "surfel/image.hpp"

namespace surfel {

/// Reads an 8- or 16-bit P2/P5 PGM, normalizing intensities by maxval.
GrayImage read_pgm(const std::filesystem::path& path);

/// Reads a 16-bit depth PGM; count 0 is invalid, otherwise depth = count * scale.
DepthMap read_depth_pgm(const std::filesystem::path& path, double scale);

/// Writes a binary PGM with maxval 255 or 65535 (values clamped to [0, 1]).
void write_pgm(const std::filesystem::path& path, const GrayImage& img, int maxval = 255);

void write_depth_pgm(const std::filesystem::path& path, const DepthMap& depth, double scale);

}  // namespace surfel
