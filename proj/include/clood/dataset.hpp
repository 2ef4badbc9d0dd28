#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clood/glyphgen.hpp"
#include "json.hpp"

namespace clood {

struct LabelPair {
  std::uint8_t char_id = 0;
  std::uint8_t font_id = 0;
  bool operator==(const LabelPair&) const = default;
};

// Number of images to render per (char, font) cell, indexed [char][font].
struct DatasetConfig {
  std::array<std::array<int, glyph::kNumFonts>, glyph::kNumChars> counts{};

  static DatasetConfig uniform(int per_cell);
  static DatasetConfig single_cell(int char_id, int font_id, int count);

  long total() const;
  nlohmann::json to_json() const;
  static DatasetConfig from_json(const nlohmann::json& j);
  // sha256 of the canonical JSON form.
  std::string hash() const;
};

// Rendered images plus both labels. Images are stored row-major, 32x32x1,
// float32 in [0,1]. Examples are ordered cell-major: char, then font, then
// draw index.
class Dataset {
 public:
  static constexpr std::string_view kMagic = "CLOOD1";
  static constexpr std::uint16_t kVersion = 1;

  Dataset() = default;
  Dataset(DatasetConfig config, std::uint64_t seed) : config_(config), seed_(seed) {}

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::span<const float, glyph::kPixels> image(std::size_t i) const {
    return std::span<const float, glyph::kPixels>(pixels_.data() + i * glyph::kPixels,
                                                  glyph::kPixels);
  }
  const LabelPair& labels(std::size_t i) const { return labels_[i]; }
  const DatasetConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

  void append(const glyph::Image& image, LabelPair labels);

  // CLOOD1 container bytes (little-endian).
  std::vector<std::uint8_t> serialize() const;
  static Dataset deserialize(std::span<const std::uint8_t> bytes);

  // Git-style blob hash of the serialized container.
  std::string content_hash() const;

  nlohmann::json manifest() const;

  // Writes <dir>/dataset.clood and the <dir>/dataset.json sidecar.
  void save(const std::filesystem::path& dir) const;
  static Dataset load(const std::filesystem::path& dir);

 private:
  DatasetConfig config_{};
  std::uint64_t seed_ = 0;
  std::vector<float> pixels_;
  std::vector<LabelPair> labels_;
};

// Renders every requested cell. Each image draws its nuisance factors from
// its own seed, derived from (seed, cell, draw index), so the result is a
// pure function of (config, seed).
Dataset render_dataset(const DatasetConfig& config, std::uint64_t seed);

std::uint64_t image_seed(std::uint64_t dataset_seed, int char_id, int font_id, int draw);

}  // namespace clood
