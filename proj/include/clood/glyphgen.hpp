#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "clood/rng.hpp"

// Procedural glyph renderer: ten stroke skeletons styled by ten parametric
// fonts, rendered at 32x32 grayscale with fully controlled nuisance factors.
namespace clood::glyph {

inline constexpr int kNumChars = 10;
inline constexpr int kNumFonts = 10;
inline constexpr int kImageSize = 32;
inline constexpr int kPixels = kImageSize * kImageSize;
inline constexpr int kSupersample = 4;

// Character glyphs by char_id.
inline constexpr std::string_view kCharNames = "ACEHKMOSTZ";

struct Point {
  double x = 0;
  double y = 0;
};

using Polyline = std::vector<Point>;

// Control points live in the unit square, x to the right, y downwards.
struct GlyphSkeleton {
  int char_id = 0;
  std::vector<Polyline> strokes;
};

struct FontStyle {
  int font_id = 0;
  double stroke_width = 0.1;  // fraction of image width
  double slant = 0.0;         // radians, positive leans right
  double roundness = 0.0;     // 0 = sharp corners and square caps, 1 = smooth and round
  bool serif = false;
  double aspect = 1.0;        // horizontal scale
};

// Everything needed to render one image.
struct LatentSpec {
  int char_id = 0;
  int font_id = 0;
  double translate_x = 0.0;  // fraction of image size
  double translate_y = 0.0;
  double scale = 1.0;
  double rotation = 0.0;  // radians
  double fg_intensity = 1.0;
  double bg_intensity = 0.0;
  std::uint64_t noise_seed = 0;
  double noise_amp = 0.0;

  bool operator==(const LatentSpec&) const = default;
};

struct Image {
  std::array<float, kPixels> pixels{};

  float at(int row, int col) const { return pixels[row * kImageSize + col]; }
  bool operator==(const Image&) const = default;
};

// Axis-aligned extent of the inked region, in image-fraction coordinates.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

// Nuisance ranges used by sample_latents.
inline constexpr double kMinScale = 0.65;
inline constexpr double kMaxScale = 1.0;
inline constexpr double kMaxRotation = 0.12;
inline constexpr double kMaxTranslate = 0.10;
inline constexpr double kMaxNoise = 0.10;
inline constexpr double kMinContrast = 0.3;

const std::array<GlyphSkeleton, kNumChars>& skeletons();
const std::array<FontStyle, kNumFonts>& font_styles();

// Throws DomainError when a field is outside its documented range, including
// a glyph that would leave the image.
void validate(const LatentSpec& spec);

// Draws nuisance factors for one (char, font) cell from rng.
LatentSpec sample_latents(Rng& rng, int char_id, int font_id);

// Centered, noise-free, full-contrast spec at a mid scale.
LatentSpec canonical_latents(int char_id, int font_id);

// Styled and posed strokes in image-fraction coordinates.
struct Segment {
  Point a, b;
  bool square_start = false;
  bool square_end = false;
};

struct GlyphGeometry {
  std::vector<Segment> segments;
  double half_width = 0.0;
};

GlyphGeometry layout(const LatentSpec& spec);
Box ink_bounds(const LatentSpec& spec);

Image render(const LatentSpec& spec);

// Fraction of pixels whose intensity is closer to fg than to bg.
double ink_fraction(const Image& image, const LatentSpec& spec);

}  // namespace clood::glyph
