#pragma once

#include <filesystem>
#include <vector>

#include "llie/tensor.hpp"

namespace llie {

/// Reads an 8- or 16-bit PNG as a (1, C, H, W) tensor in [0, 1]. Gray and
/// gray+alpha images give C = 1, everything else C = 3 (alpha dropped,
/// palettes expanded).
Tensor read_png(const std::filesystem::path& path);

/// Writes a (1, C, H, W) tensor, C in {1, 3}, clamped to [0, 1] and
/// rounded to the nearest code value. bit_depth is 8 or 16.
void write_png(const std::filesystem::path& path, const Tensor& img, int bit_depth = 8);

/// Writes a packed 8-bit RGB buffer (row-major, 3 bytes per pixel).
void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    const std::vector<unsigned char>& rgb);

}  // namespace llie
