#include "clood/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "clood/errors.hpp"
#include "clood/hash.hpp"

namespace clood {
namespace {

constexpr std::size_t kHeaderBytes = 6 + 2 + 4 + 2 + 2 + 2 + 8;

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  template <typename T>
  void put(T value) {
    auto bits = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    out_.insert(out_.end(), bits.begin(), bits.end());
  }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    std::array<std::uint8_t, sizeof(T)> bits;
    std::memcpy(bits.data(), in_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view v(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return v;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw IoError("truncated CLOOD1 container");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

DatasetConfig DatasetConfig::uniform(int per_cell) {
  DatasetConfig c;
  for (auto& row : c.counts) row.fill(per_cell);
  return c;
}

DatasetConfig DatasetConfig::single_cell(int char_id, int font_id, int count) {
  DatasetConfig c;
  c.counts.at(char_id).at(font_id) = count;
  return c;
}

long DatasetConfig::total() const {
  long n = 0;
  for (const auto& row : counts) {
    for (int v : row) n += v;
  }
  return n;
}

nlohmann::json DatasetConfig::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : counts) rows.push_back(row);
  return {{"counts", rows}};
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) {
  DatasetConfig c;
  const auto& rows = j.at("counts");
  if (rows.size() != glyph::kNumChars) throw DomainError("counts must have 10 rows");
  for (int ch = 0; ch < glyph::kNumChars; ++ch) {
    if (rows[ch].size() != glyph::kNumFonts) throw DomainError("counts rows must have 10 entries");
    for (int f = 0; f < glyph::kNumFonts; ++f) c.counts[ch][f] = rows[ch][f].get<int>();
  }
  return c;
}

std::string DatasetConfig::hash() const { return sha256_hex(to_json().dump()); }

void Dataset::append(const glyph::Image& image, LabelPair labels) {
  pixels_.insert(pixels_.end(), image.pixels.begin(), image.pixels.end());
  labels_.push_back(labels);
}

std::vector<std::uint8_t> Dataset::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + pixels_.size() * 4 + labels_.size() * 2);
  Writer w(out);
  w.bytes(kMagic);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(size()));
  w.put<std::uint16_t>(glyph::kImageSize);
  w.put<std::uint16_t>(glyph::kImageSize);
  w.put<std::uint16_t>(1);
  w.put<std::uint64_t>(seed_);
  for (float p : pixels_) w.put<float>(p);
  for (const LabelPair& l : labels_) {
    w.put<std::uint8_t>(l.char_id);
    w.put<std::uint8_t>(l.font_id);
  }
  return out;
}

Dataset Dataset::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.bytes(kMagic.size()) != kMagic) throw IoError("bad magic: not a CLOOD1 container");
  if (r.get<std::uint16_t>() != kVersion) throw IoError("unsupported CLOOD1 version");
  const std::uint32_t n = r.get<std::uint32_t>();
  const auto h = r.get<std::uint16_t>();
  const auto w = r.get<std::uint16_t>();
  const auto c = r.get<std::uint16_t>();
  if (h != glyph::kImageSize || w != glyph::kImageSize || c != 1) {
    throw IoError("unexpected image shape in CLOOD1 container");
  }
  Dataset d;
  d.seed_ = r.get<std::uint64_t>();
  if (r.remaining() != static_cast<std::size_t>(n) * (glyph::kPixels * 4 + 2)) {
    throw IoError("CLOOD1 container size mismatch");
  }
  d.pixels_.resize(static_cast<std::size_t>(n) * glyph::kPixels);
  for (float& p : d.pixels_) p = r.get<float>();
  d.labels_.resize(n);
  for (LabelPair& l : d.labels_) {
    l.char_id = r.get<std::uint8_t>();
    l.font_id = r.get<std::uint8_t>();
    if (l.char_id >= glyph::kNumChars || l.font_id >= glyph::kNumFonts) {
      throw IoError("label out of range in CLOOD1 container");
    }
  }
  // The container does not carry the config; recover the cell counts.
  for (const LabelPair& l : d.labels_) ++d.config_.counts[l.char_id][l.font_id];
  return d;
}

std::string Dataset::content_hash() const { return git_blob_hash(serialize()); }

nlohmann::json Dataset::manifest() const {
  return {{"format", std::string(kMagic)},
          {"version", kVersion},
          {"count", size()},
          {"shape", {glyph::kImageSize, glyph::kImageSize, 1}},
          {"seed", seed_},
          {"counts", config_.to_json()["counts"]},
          {"config_hash", config_.hash()},
          {"content_hash", content_hash()}};
}

void Dataset::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  const auto bytes = serialize();
  {
    std::ofstream out(dir / "dataset.clood", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "dataset.clood").string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + (dir / "dataset.clood").string());
  }
  std::ofstream meta(dir / "dataset.json", std::ios::trunc);
  if (!meta) throw IoError("cannot write " + (dir / "dataset.json").string());
  meta << manifest().dump(2) << '\n';
}

Dataset Dataset::load(const std::filesystem::path& dir) {
  const auto path = dir / "dataset.clood";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("dataset not found: " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

std::uint64_t image_seed(std::uint64_t dataset_seed, int char_id, int font_id, int draw) {
  const std::uint64_t module_seed = derive_seed(dataset_seed, tag("glyphgen"));
  const auto cell = static_cast<std::uint64_t>(char_id * glyph::kNumFonts + font_id);
  return derive_seed(module_seed, cell, static_cast<std::uint64_t>(draw));
}

Dataset render_dataset(const DatasetConfig& config, std::uint64_t seed) {
  for (const auto& row : config.counts) {
    for (int v : row) {
      if (v < 0) throw DomainError("negative per-cell count in dataset config");
    }
  }
  if (config.total() <= 0) throw DomainError("dataset config requests zero images");
  Dataset d(config, seed);
  for (int c = 0; c < glyph::kNumChars; ++c) {
    for (int f = 0; f < glyph::kNumFonts; ++f) {
      for (int k = 0; k < config.counts[c][f]; ++k) {
        Rng rng(image_seed(seed, c, f, k));
        const glyph::LatentSpec spec = glyph::sample_latents(rng, c, f);
        d.append(glyph::render(spec),
                 {static_cast<std::uint8_t>(c), static_cast<std::uint8_t>(f)});
      }
    }
  }
  return d;
}

}  // namespace clood
