#pragma once

#include <filesystem>
#include <span>

#include "clood/dataset.hpp"

namespace clood {

// 8-bit grayscale PNG; pixel values in [0,1] are quantized with rounding.
void write_png_gray(const std::filesystem::path& path, int width, int height,
                    std::span<const float> pixels);

// One image per (char, font) cell laid out as a 10x10 grid, rows = chars.
// Cells without an example are left black.
void write_contact_sheet(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace clood
