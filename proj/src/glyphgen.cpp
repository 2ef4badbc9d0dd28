#include "clood/glyphgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "clood/errors.hpp"

namespace clood::glyph {
namespace {

// Portion of the image side covered by the unit glyph square at scale 1.
constexpr double kGlyphExtent = 0.85;
constexpr double kSerifLength = 0.14;
constexpr int kChaikinIterations = 2;

Polyline line(std::initializer_list<Point> pts) { return Polyline(pts); }

// Elliptical arc, angles in degrees, 0 = +x, 90 = +y (downwards).
Polyline arc(double cx, double cy, double rx, double ry, double from_deg, double to_deg,
             int points) {
  Polyline out;
  out.reserve(points);
  for (int i = 0; i < points; ++i) {
    const double t = from_deg + (to_deg - from_deg) * i / (points - 1);
    const double a = t * std::numbers::pi / 180.0;
    out.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return out;
}

std::array<GlyphSkeleton, kNumChars> build_skeletons() {
  std::array<GlyphSkeleton, kNumChars> s;
  // A
  s[0].strokes = {line({{0.20, 0.85}, {0.50, 0.15}, {0.80, 0.85}}),
                  line({{0.33, 0.58}, {0.67, 0.58}})};
  // C
  s[1].strokes = {arc(0.52, 0.50, 0.30, 0.35, 320.0, 40.0, 15)};
  // E
  s[2].strokes = {line({{0.76, 0.15}, {0.26, 0.15}, {0.26, 0.85}, {0.76, 0.85}}),
                  line({{0.26, 0.50}, {0.66, 0.50}})};
  // H
  s[3].strokes = {line({{0.25, 0.15}, {0.25, 0.85}}), line({{0.75, 0.15}, {0.75, 0.85}}),
                  line({{0.25, 0.50}, {0.75, 0.50}})};
  // K
  s[4].strokes = {line({{0.28, 0.15}, {0.28, 0.85}}), line({{0.76, 0.15}, {0.28, 0.57}}),
                  line({{0.43, 0.44}, {0.77, 0.85}})};
  // M
  s[5].strokes = {line({{0.20, 0.85}, {0.23, 0.15}, {0.50, 0.62}, {0.77, 0.15}, {0.80, 0.85}})};
  // O
  s[6].strokes = {arc(0.50, 0.50, 0.28, 0.35, 0.0, 360.0, 21)};
  // S: upper bowl from the upper right over the top to the middle, then the
  // lower bowl from the middle around the right to the lower left.
  {
    Polyline upper = arc(0.50, 0.325, 0.24, 0.175, 340.0, 90.0, 10);
    Polyline lower = arc(0.50, 0.675, 0.24, 0.175, 270.0, 520.0, 10);
    upper.insert(upper.end(), lower.begin() + 1, lower.end());
    s[7].strokes = {upper};
  }
  // T
  s[8].strokes = {line({{0.18, 0.15}, {0.82, 0.15}}), line({{0.50, 0.15}, {0.50, 0.85}})};
  // Z
  s[9].strokes = {line({{0.22, 0.15}, {0.78, 0.15}, {0.22, 0.85}, {0.78, 0.85}})};
  for (int c = 0; c < kNumChars; ++c) s[c].char_id = c;
  return s;
}

std::array<FontStyle, kNumFonts> build_fonts() {
  //            id  width  slant  round  serif  aspect
  return {{{0, 0.08, 0.00, 0.0, false, 1.00},
           {1, 0.12, 0.00, 0.0, false, 0.80},
           {2, 0.08, 0.25, 0.0, false, 0.85},
           {3, 0.12, 0.25, 1.0, false, 1.00},
           {4, 0.08, 0.00, 1.0, true, 1.00},
           {5, 0.12, 0.00, 0.0, true, 1.20},
           {6, 0.08, -0.25, 1.0, false, 1.15},
           {7, 0.10, 0.25, 0.0, true, 1.00},
           {8, 0.10, -0.25, 0.0, false, 0.80},
           {9, 0.10, 0.00, 1.0, false, 1.25}}};
}

bool is_closed(const Polyline& p) {
  return p.size() > 2 && p.front().x == p.back().x && p.front().y == p.back().y;
}

// Corner cutting with cut ratio proportional to roundness; endpoints of open
// strokes are kept in place.
Polyline smooth(const Polyline& in, double roundness) {
  if (roundness <= 0.0 || in.size() < 3) return in;
  const double r = 0.25 * roundness;
  Polyline cur = in;
  for (int it = 0; it < kChaikinIterations; ++it) {
    Polyline next;
    next.reserve(cur.size() * 2);
    next.push_back(cur.front());
    for (std::size_t i = 0; i + 1 < cur.size(); ++i) {
      const Point& p = cur[i];
      const Point& q = cur[i + 1];
      const Point a{p.x + r * (q.x - p.x), p.y + r * (q.y - p.y)};
      const Point b{q.x - r * (q.x - p.x), q.y - r * (q.y - p.y)};
      if (i > 0) next.push_back(a);
      if (i + 2 < cur.size()) next.push_back(b);
    }
    next.push_back(cur.back());
    cur = std::move(next);
  }
  return cur;
}

void check_ids(int char_id, int font_id) {
  if (char_id < 0 || char_id >= kNumChars) {
    throw DomainError("char_id out of range [0,10): " + std::to_string(char_id));
  }
  if (font_id < 0 || font_id >= kNumFonts) {
    throw DomainError("font_id out of range [0,10): " + std::to_string(font_id));
  }
}

}  // namespace

const std::array<GlyphSkeleton, kNumChars>& skeletons() {
  static const auto kSkeletons = build_skeletons();
  return kSkeletons;
}

const std::array<FontStyle, kNumFonts>& font_styles() {
  static const auto kFonts = build_fonts();
  return kFonts;
}

GlyphGeometry layout(const LatentSpec& spec) {
  check_ids(spec.char_id, spec.font_id);
  const GlyphSkeleton& skel = skeletons()[spec.char_id];
  const FontStyle& font = font_styles()[spec.font_id];
  const bool square_caps = font.roundness < 0.5;
  const double shear = std::tan(font.slant);
  const double k = kGlyphExtent * spec.scale;
  const double cr = std::cos(spec.rotation);
  const double sr = std::sin(spec.rotation);

  auto style = [&](Point p) {
    p.x = 0.5 + (p.x - 0.5) * font.aspect;
    p.x += shear * (0.5 - p.y);
    return p;
  };
  auto pose = [&](Point p) {
    const double u = p.x - 0.5;
    const double v = p.y - 0.5;
    return Point{0.5 + k * (cr * u - sr * v) + spec.translate_x,
                 0.5 + k * (sr * u + cr * v) + spec.translate_y};
  };

  GlyphGeometry g;
  g.half_width = 0.5 * font.stroke_width;
  auto emit = [&](const Polyline& styled, bool open) {
    for (std::size_t i = 0; i + 1 < styled.size(); ++i) {
      Segment seg{pose(styled[i]), pose(styled[i + 1])};
      seg.square_start = open && square_caps && i == 0;
      seg.square_end = open && square_caps && i + 2 == styled.size();
      g.segments.push_back(seg);
    }
  };

  for (const Polyline& raw : skel.strokes) {
    const bool open = !is_closed(raw);
    Polyline styled = smooth(raw, font.roundness);
    for (Point& p : styled) p = style(p);
    emit(styled, open);
    if (font.serif && open) {
      for (int end = 0; end < 2; ++end) {
        const Point& tip = end == 0 ? styled.front() : styled.back();
        const Point& prev = end == 0 ? styled[1] : styled[styled.size() - 2];
        double dx = tip.x - prev.x;
        double dy = tip.y - prev.y;
        const double len = std::hypot(dx, dy);
        dx /= len;
        dy /= len;
        const double h = 0.5 * kSerifLength;
        emit({{tip.x - dy * h, tip.y + dx * h}, {tip.x + dy * h, tip.y - dx * h}}, true);
      }
    }
  }
  return g;
}

Box ink_bounds(const LatentSpec& spec) {
  const GlyphGeometry g = layout(spec);
  // Square caps reach hw*sqrt(2) from an endpoint at their corners.
  const double pad = g.half_width * std::numbers::sqrt2;
  Box b{1e9, 1e9, -1e9, -1e9};
  for (const Segment& s : g.segments) {
    for (const Point& p : {s.a, s.b}) {
      b.x0 = std::min(b.x0, p.x - pad);
      b.y0 = std::min(b.y0, p.y - pad);
      b.x1 = std::max(b.x1, p.x + pad);
      b.y1 = std::max(b.y1, p.y + pad);
    }
  }
  return b;
}

void validate(const LatentSpec& spec) {
  check_ids(spec.char_id, spec.font_id);
  auto fail = [](const std::string& what) { throw DomainError("invalid LatentSpec: " + what); };
  if (!(spec.scale >= 0.6 && spec.scale <= 1.0)) fail("scale outside [0.6, 1.0]");
  if (!(std::abs(spec.rotation) <= 0.5)) fail("rotation outside [-0.5, 0.5]");
  if (!(spec.fg_intensity >= 0.0 && spec.fg_intensity <= 1.0)) fail("fg_intensity outside [0,1]");
  if (!(spec.bg_intensity >= 0.0 && spec.bg_intensity <= 1.0)) fail("bg_intensity outside [0,1]");
  if (!(std::abs(spec.fg_intensity - spec.bg_intensity) >= kMinContrast)) {
    fail("|fg - bg| below 0.3");
  }
  if (!(spec.noise_amp >= 0.0 && spec.noise_amp <= kMaxNoise)) fail("noise_amp outside [0, 0.1]");
  if (!std::isfinite(spec.translate_x) || !std::isfinite(spec.translate_y)) fail("translate");
  const Box b = ink_bounds(spec);
  if (b.x0 < 0.0 || b.y0 < 0.0 || b.x1 > 1.0 || b.y1 > 1.0) fail("glyph leaves the image");
}

LatentSpec sample_latents(Rng& rng, int char_id, int font_id) {
  check_ids(char_id, font_id);
  LatentSpec s;
  s.char_id = char_id;
  s.font_id = font_id;
  s.scale = rng.uniform(kMinScale, kMaxScale);
  s.rotation = rng.uniform(-kMaxRotation, kMaxRotation);
  s.fg_intensity = rng.uniform(0.7, 1.0);
  s.bg_intensity = rng.uniform(0.0, 0.3);
  s.noise_amp = rng.uniform(0.0, kMaxNoise);
  s.noise_seed = rng.next_u64();

  const Box b = ink_bounds(s);
  auto pick = [&](double lo_edge, double hi_edge) {
    const double lo = std::max(-kMaxTranslate, -lo_edge);
    const double hi = std::min(kMaxTranslate, 1.0 - hi_edge);
    const double u = rng.uniform();
    return lo <= hi ? lo + (hi - lo) * u : 0.5 * (lo + hi);
  };
  s.translate_x = pick(b.x0, b.x1);
  s.translate_y = pick(b.y0, b.y1);
  return s;
}

LatentSpec canonical_latents(int char_id, int font_id) {
  check_ids(char_id, font_id);
  LatentSpec s;
  s.char_id = char_id;
  s.font_id = font_id;
  s.scale = 0.85;
  return s;
}

Image render(const LatentSpec& spec) {
  const GlyphGeometry g = layout(spec);
  constexpr int kSide = kImageSize * kSupersample;
  std::vector<std::uint8_t> mask(kSide * kSide, 0);
  const double hw = g.half_width;
  const double hw2 = hw * hw;

  for (const Segment& s : g.segments) {
    const double dx = s.b.x - s.a.x;
    const double dy = s.b.y - s.a.y;
    const double len = std::hypot(dx, dy);
    const double ux = len > 0 ? dx / len : 1.0;
    const double uy = len > 0 ? dy / len : 0.0;
    const double pad = hw * std::numbers::sqrt2;
    const int i0 = std::max(0, static_cast<int>(std::floor((std::min(s.a.y, s.b.y) - pad) * kSide)));
    const int i1 = std::min(kSide - 1, static_cast<int>(std::ceil((std::max(s.a.y, s.b.y) + pad) * kSide)));
    const int j0 = std::max(0, static_cast<int>(std::floor((std::min(s.a.x, s.b.x) - pad) * kSide)));
    const int j1 = std::min(kSide - 1, static_cast<int>(std::ceil((std::max(s.a.x, s.b.x) + pad) * kSide)));
    for (int i = i0; i <= i1; ++i) {
      const double py = (i + 0.5) / kSide;
      for (int j = j0; j <= j1; ++j) {
        const double px = (j + 0.5) / kSide;
        const double rx = px - s.a.x;
        const double ry = py - s.a.y;
        const double t = rx * ux + ry * uy;         // along the segment
        const double n = std::abs(rx * uy - ry * ux);  // across it
        bool inside;
        if (t < 0.0) {
          inside = s.square_start ? (t >= -hw && n <= hw) : (rx * rx + ry * ry <= hw2);
        } else if (t > len) {
          const double ex = px - s.b.x;
          const double ey = py - s.b.y;
          inside = s.square_end ? (t - len <= hw && n <= hw) : (ex * ex + ey * ey <= hw2);
        } else {
          inside = n <= hw;
        }
        if (inside) mask[i * kSide + j] = 1;
      }
    }
  }

  Image img;
  Rng noise(spec.noise_seed);
  const double contrast = spec.fg_intensity - spec.bg_intensity;
  constexpr double kSamples = kSupersample * kSupersample;
  for (int r = 0; r < kImageSize; ++r) {
    for (int c = 0; c < kImageSize; ++c) {
      int hits = 0;
      for (int si = 0; si < kSupersample; ++si) {
        const std::uint8_t* row = &mask[(r * kSupersample + si) * kSide + c * kSupersample];
        for (int sj = 0; sj < kSupersample; ++sj) hits += row[sj];
      }
      double v = spec.bg_intensity + contrast * (hits / kSamples);
      if (spec.noise_amp > 0.0) v += spec.noise_amp * (2.0 * noise.uniform() - 1.0);
      img.pixels[r * kImageSize + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

double ink_fraction(const Image& image, const LatentSpec& spec) {
  int count = 0;
  for (float p : image.pixels) {
    if (std::abs(p - spec.fg_intensity) < std::abs(p - spec.bg_intensity)) ++count;
  }
  return static_cast<double>(count) / kPixels;
}

}  // namespace clood::glyph
