#include "clood/png_export.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "clood/errors.hpp"

namespace clood {

void write_png_gray(const std::filesystem::path& path, int width, int height,
                    std::span<const float> pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw DomainError("pixel buffer does not match PNG dimensions");
  }
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed for " + path.string());
  }
  std::vector<png_byte> rows(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const float v = std::fmin(1.0f, std::fmax(0.0f, pixels[i]));
    rows[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed while writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) png_write_row(png, rows.data() + static_cast<std::size_t>(r) * width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_contact_sheet(const Dataset& dataset, const std::filesystem::path& path) {
  constexpr int kS = glyph::kImageSize;
  constexpr int kW = kS * glyph::kNumFonts;
  constexpr int kH = kS * glyph::kNumChars;
  std::vector<float> sheet(static_cast<std::size_t>(kW) * kH, 0.0f);
  std::vector<bool> filled(glyph::kNumChars * glyph::kNumFonts, false);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const LabelPair l = dataset.labels(i);
    const int cell = l.char_id * glyph::kNumFonts + l.font_id;
    if (filled[cell]) continue;
    filled[cell] = true;
    const auto img = dataset.image(i);
    for (int r = 0; r < kS; ++r) {
      for (int c = 0; c < kS; ++c) {
        sheet[static_cast<std::size_t>(l.char_id * kS + r) * kW + l.font_id * kS + c] = img[r * kS + c];
      }
    }
  }
  write_png_gray(path, kW, kH, sheet);
}

}  // namespace clood
