#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "clood/errors.hpp"
#include "clood/glyphgen.hpp"

namespace clood::glyph {
namespace {

double mean_l1(const Image& a, const Image& b) {
  double s = 0;
  for (int i = 0; i < kPixels; ++i) s += std::abs(a.pixels[i] - b.pixels[i]);
  return s / kPixels;
}

// Independent of the library's ink_fraction helper.
double inked(const Image& img, const LatentSpec& spec) {
  int n = 0;
  for (float p : img.pixels) n += std::abs(p - spec.fg_intensity) < std::abs(p - spec.bg_intensity);
  return static_cast<double>(n) / kPixels;
}

TEST(Skeletons, TenNonDegenerateInUnitSquare) {
  const auto& sk = skeletons();
  ASSERT_EQ(sk.size(), 10u);
  for (int c = 0; c < kNumChars; ++c) {
    EXPECT_EQ(sk[c].char_id, c);
    std::size_t points = 0;
    for (const auto& stroke : sk[c].strokes) {
      points += stroke.size();
      for (const auto& p : stroke) {
        EXPECT_GE(p.x, 0.0);
        EXPECT_LE(p.x, 1.0);
        EXPECT_GE(p.y, 0.0);
        EXPECT_LE(p.y, 1.0);
      }
    }
    EXPECT_TRUE(sk[c].strokes.size() >= 2 || points >= 4) << "char " << c;
  }
}

TEST(FontStyles, TenStylesInRangeAndPairwiseDistinctInTwoFields) {
  const auto& fs = font_styles();
  ASSERT_EQ(fs.size(), 10u);
  for (int f = 0; f < kNumFonts; ++f) {
    EXPECT_EQ(fs[f].font_id, f);
    EXPECT_GT(fs[f].stroke_width, 0.0);
    EXPECT_LE(fs[f].stroke_width, 0.25);
    EXPECT_LE(std::abs(fs[f].slant), 0.35);
    EXPECT_GE(fs[f].aspect, 0.7);
    EXPECT_LE(fs[f].aspect, 1.3);
    EXPECT_GE(fs[f].roundness, 0.0);
    EXPECT_LE(fs[f].roundness, 1.0);
  }
  for (int a = 0; a < kNumFonts; ++a)
    for (int b = a + 1; b < kNumFonts; ++b) {
      const auto &x = fs[a], &y = fs[b];
      const int diff = (x.stroke_width != y.stroke_width) + (x.slant != y.slant) + (x.roundness != y.roundness) +
                       (x.serif != y.serif) + (x.aspect != y.aspect);
      EXPECT_GE(diff, 2) << "fonts " << a << " and " << b;
    }
}

TEST(SampleLatents, ReproducibleForSameSeed) {
  Rng a(7), b(7);
  EXPECT_EQ(sample_latents(a, 0, 0), sample_latents(b, 0, 0));
}

TEST(SampleLatents, DifferentSeedsDiffer) {
  Rng a(7), b(8);
  const LatentSpec x = sample_latents(a, 0, 0), y = sample_latents(b, 0, 0);
  const bool differs = x.translate_x != y.translate_x || x.translate_y != y.translate_y || x.scale != y.scale ||
                       x.rotation != y.rotation || x.fg_intensity != y.fg_intensity ||
                       x.bg_intensity != y.bg_intensity || x.noise_seed != y.noise_seed ||
                       x.noise_amp != y.noise_amp;
  EXPECT_TRUE(differs);
}

TEST(SampleLatents, SuccessiveDrawsDiffer) {
  Rng rng(7);
  EXPECT_FALSE(sample_latents(rng, 3, 4) == sample_latents(rng, 3, 4));
}

TEST(SampleLatents, RejectsOutOfRangeIds) {
  Rng rng(1);
  EXPECT_THROW(sample_latents(rng, 10, 0), DomainError);
  EXPECT_THROW(sample_latents(rng, 0, 10), DomainError);
  EXPECT_THROW(sample_latents(rng, -1, 0), DomainError);
}

TEST(SampleLatents, SatisfiesLatentInvariants) {
  Rng rng(2024);
  for (int i = 0; i < 2000; ++i) {
    const int c = static_cast<int>(rng.below(10)), f = static_cast<int>(rng.below(10));
    const LatentSpec s = sample_latents(rng, c, f);
    EXPECT_NO_THROW(validate(s));
    EXPECT_GE(std::abs(s.fg_intensity - s.bg_intensity), 0.3);
    EXPECT_GE(s.scale, 0.6);
    EXPECT_LE(s.scale, 1.0);
    EXPECT_GE(s.noise_amp, 0.0);
    EXPECT_LE(s.noise_amp, 0.1);
    const Box b = ink_bounds(s);
    EXPECT_GE(b.x0, 0.0);
    EXPECT_GE(b.y0, 0.0);
    EXPECT_LE(b.x1, 1.0);
    EXPECT_LE(b.y1, 1.0);
  }
}

TEST(Validate, RejectsLowContrastAndLoudNoise) {
  LatentSpec s = canonical_latents(0, 0);
  EXPECT_NO_THROW(validate(s));
  s.bg_intensity = 0.8;
  EXPECT_THROW(validate(s), DomainError);
  s = canonical_latents(0, 0);
  s.noise_amp = 0.2;
  EXPECT_THROW(validate(s), DomainError);
  s = canonical_latents(0, 0);
  s.translate_x = 0.45;
  EXPECT_THROW(validate(s), DomainError);
}

TEST(Render, BitIdenticalForIdenticalSpec) {
  Rng rng(5);
  const LatentSpec s = sample_latents(rng, 6, 2);
  EXPECT_EQ(render(s), render(s));
}

TEST(Render, CleanFullContrastSpansZeroToOne) {
  LatentSpec s = canonical_latents(4, 1);
  ASSERT_EQ(s.fg_intensity, 1.0);
  ASSERT_EQ(s.bg_intensity, 0.0);
  ASSERT_EQ(s.noise_amp, 0.0);
  const Image img = render(s);
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  EXPECT_EQ(*lo, 0.0f);
  EXPECT_EQ(*hi, 1.0f);
  // Anything strictly between is anti-aliased fringe, adjacent to ink.
  int fringe = 0, solid = 0;
  for (float p : img.pixels) {
    fringe += p > 0.0f && p < 1.0f;
    solid += p == 1.0f;
  }
  EXPECT_GT(solid, 0);
  EXPECT_GT(fringe, 0);
}

TEST(Render, PixelsInRangeAndInkCoverageBounded) {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const int c = i % 10, f = (i / 10) % 10;
    const LatentSpec s = sample_latents(rng, c, f);
    const Image img = render(s);
    for (float p : img.pixels) {
      ASSERT_GE(p, 0.0f);
      ASSERT_LE(p, 1.0f);
    }
    const double ink = inked(img, s);
    EXPECT_GE(ink, 0.05) << "char " << c << " font " << f;
    EXPECT_LE(ink, 0.80) << "char " << c << " font " << f;
    EXPECT_DOUBLE_EQ(ink, ink_fraction(img, s));
  }
}

TEST(Render, CharactersDifferUnderFixedStyle) {
  // Minimum over all 45 char pairs; 0.02 is the declared floor.
  for (int f = 0; f < kNumFonts; ++f) {
    double min_d = std::numeric_limits<double>::max();
    for (int a = 0; a < kNumChars; ++a)
      for (int b = a + 1; b < kNumChars; ++b)
        min_d = std::min(min_d, mean_l1(render(canonical_latents(a, f)), render(canonical_latents(b, f))));
    EXPECT_GE(min_d, 0.02) << "font " << f;
  }
  EXPECT_GE(mean_l1(render(canonical_latents(0, 0)), render(canonical_latents(1, 0))), 0.02);
}

TEST(Render, FontsDifferUnderFixedCharAndNuisance) {
  for (int c = 0; c < kNumChars; ++c)
    for (int a = 0; a < kNumFonts; ++a)
      for (int b = a + 1; b < kNumFonts; ++b)
        EXPECT_GT(mean_l1(render(canonical_latents(c, a)), render(canonical_latents(c, b))), 0.0)
            << "char " << c << " fonts " << a << "," << b;
}

TEST(Render, NearestCentroidSeparatesCharacters) {
  // 100 clean centered renders (10 chars x 10 fonts); centroid per char.
  std::array<std::array<double, kPixels>, kNumChars> centroid{};
  std::vector<std::pair<int, Image>> samples;
  for (int c = 0; c < kNumChars; ++c)
    for (int f = 0; f < kNumFonts; ++f) {
      Image img = render(canonical_latents(c, f));
      for (int i = 0; i < kPixels; ++i) centroid[c][i] += img.pixels[i] / kNumFonts;
      samples.emplace_back(c, img);
    }
  int correct = 0;
  for (const auto& [c, img] : samples) {
    int best = 0;
    double best_d = std::numeric_limits<double>::max();
    for (int k = 0; k < kNumChars; ++k) {
      double d = 0;
      for (int i = 0; i < kPixels; ++i) d += (img.pixels[i] - centroid[k][i]) * (img.pixels[i] - centroid[k][i]);
      if (d < best_d) best_d = d, best = k;
    }
    correct += best == c;
  }
  EXPECT_GE(correct, 90);
}

TEST(Render, NoiseStaysWithinAmplitude) {
  LatentSpec clean = canonical_latents(2, 3);
  clean.fg_intensity = 0.8;
  clean.bg_intensity = 0.2;
  LatentSpec noisy = clean;
  noisy.noise_amp = 0.1;
  noisy.noise_seed = 42;
  const Image a = render(clean), b = render(noisy);
  double max_diff = 0;
  for (int i = 0; i < kPixels; ++i) max_diff = std::max(max_diff, double(std::abs(a.pixels[i] - b.pixels[i])));
  EXPECT_GT(max_diff, 0.0);
  EXPECT_LE(max_diff, 0.1 + 1e-6);
}

}  // namespace
}  // namespace clood::glyph
