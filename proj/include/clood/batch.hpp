#pragma once

#include <span>
#include <vector>

#include "clood/dataset.hpp"
#include "clood/tensor.hpp"

namespace clood {

enum class LabelKind { kFont, kChar, kFontChar };

// Flattened font x char class: 10 * font + char.
inline int font_char_label(int font_id, int char_id) { return font_id * glyph::kNumChars + char_id; }
inline int font_of(int font_char) { return font_char / glyph::kNumChars; }
inline int char_of(int font_char) { return font_char % glyph::kNumChars; }

inline int label_of(const LabelPair& l, LabelKind kind) {
  switch (kind) {
    case LabelKind::kFont: return l.font_id;
    case LabelKind::kChar: return l.char_id;
    case LabelKind::kFontChar: return font_char_label(l.font_id, l.char_id);
  }
  return 0;
}

// Copies the selected images into a (n, 32, 32, 1) tensor.
template <typename T>
nn::Tensor<T> gather_images(const Dataset& ds, std::span<const std::size_t> indices) {
  nn::Tensor<T> t({static_cast<int>(indices.size()), glyph::kImageSize, glyph::kImageSize, 1});
  T* dst = t.ptr();
  for (std::size_t i : indices) {
    const auto img = ds.image(i);
    dst = std::copy(img.begin(), img.end(), dst);
  }
  return t;
}

inline std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> indices,
                                      LabelKind kind = LabelKind::kFont) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(label_of(ds.labels(i), kind));
  return out;
}

}  // namespace clood
