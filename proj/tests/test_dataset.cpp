#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "clood/errors.hpp"
#include "clood/hash.hpp"
#include "clood/png_export.hpp"
#include "test_util.hpp"

namespace clood {
namespace {

template <typename T>
T read_le(const std::vector<std::uint8_t>& b, std::size_t off) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[off + i]) << (8 * i));
  return v;
}

TEST(RenderDataset, FullGridHasTenThousandExamples) {
  const Dataset& ds = testing::cached_dataset(100, 1);
  EXPECT_EQ(ds.size(), 10000u);
  std::array<std::array<int, 10>, 10> counts{};
  for (std::size_t i = 0; i < ds.size(); ++i) ++counts[ds.labels(i).char_id][ds.labels(i).font_id];
  for (const auto& row : counts)
    for (int n : row) EXPECT_EQ(n, 100);
}

TEST(RenderDataset, SingleCell) {
  const Dataset ds = render_dataset(DatasetConfig::single_cell(3, 7, 1), 5);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.labels(0).char_id, 3);
  EXPECT_EQ(ds.labels(0).font_id, 7);
}

TEST(RenderDataset, RejectsNegativeAndEmptyConfigs) {
  DatasetConfig c = DatasetConfig::uniform(1);
  c.counts[2][2] = -1;
  EXPECT_THROW(render_dataset(c, 1), DomainError);
  EXPECT_THROW(render_dataset(DatasetConfig::uniform(0), 1), DomainError);
}

TEST(RenderDataset, ByteIdenticalForSameSeed) {
  const auto a = render_dataset(DatasetConfig::uniform(3), 9).serialize();
  const auto b = render_dataset(DatasetConfig::uniform(3), 9).serialize();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, render_dataset(DatasetConfig::uniform(3), 10).serialize());
}

TEST(Container, LittleEndianLayout) {
  const Dataset ds = render_dataset(DatasetConfig::uniform(2), 77);
  const auto bytes = ds.serialize();
  ASSERT_GE(bytes.size(), 26u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), "CLOOD1");
  EXPECT_EQ(read_le<std::uint16_t>(bytes, 6), 1);
  EXPECT_EQ(read_le<std::uint32_t>(bytes, 8), 200u);
  EXPECT_EQ(read_le<std::uint16_t>(bytes, 12), 32);
  EXPECT_EQ(read_le<std::uint16_t>(bytes, 14), 32);
  EXPECT_EQ(read_le<std::uint16_t>(bytes, 16), 1);
  EXPECT_EQ(read_le<std::uint64_t>(bytes, 18), 77u);
  const std::size_t pixels = 26, labels = pixels + 200 * 1024 * 4;
  ASSERT_EQ(bytes.size(), labels + 200 * 2);
  // First pixel and the last label record.
  const std::uint32_t raw = read_le<std::uint32_t>(bytes, pixels);
  float first;
  std::memcpy(&first, &raw, 4);
  EXPECT_EQ(first, ds.image(0)[0]);
  EXPECT_EQ(bytes[labels + 199 * 2], ds.labels(199).char_id);
  EXPECT_EQ(bytes[labels + 199 * 2 + 1], ds.labels(199).font_id);
}

TEST(Container, RoundTripAndCorruptionDetection) {
  const Dataset ds = render_dataset(DatasetConfig::uniform(2), 4);
  const auto bytes = ds.serialize();
  const Dataset back = Dataset::deserialize(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  EXPECT_EQ(back.seed(), 4u);
  EXPECT_EQ(back.config().counts, ds.config().counts);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(Dataset::deserialize(bad), IoError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 1);
  EXPECT_THROW(Dataset::deserialize(truncated), IoError);
}

TEST(Container, SaveLoadAndManifest) {
  testing::TempDir dir;
  const Dataset ds = render_dataset(DatasetConfig::uniform(2), 12);
  ds.save(dir.path() / "d");
  const Dataset back = Dataset::load(dir.path() / "d");
  EXPECT_EQ(back.serialize(), ds.serialize());
  std::ifstream in(dir.path() / "d" / "dataset.json");
  const auto manifest = nlohmann::json::parse(in);
  EXPECT_EQ(manifest["count"], 200);
  EXPECT_EQ(manifest["seed"], 12);
  EXPECT_EQ(manifest["content_hash"], git_blob_hash_file(dir.path() / "d" / "dataset.clood"));
  EXPECT_EQ(manifest["config_hash"], ds.config().hash());
  EXPECT_THROW(Dataset::load(dir.path() / "missing"), NotFoundError);
}

TEST(Container, ContactSheetIsAPng) {
  testing::TempDir dir;
  const Dataset ds = render_dataset(DatasetConfig::uniform(1), 2);
  write_contact_sheet(ds, dir.path() / "s.png");
  std::ifstream in(dir.path() / "s.png", std::ios::binary);
  char sig[8];
  in.read(sig, 8);
  EXPECT_EQ(std::string(sig + 1, 3), "PNG");
}

TEST(DatasetConfig, JsonRoundTrip) {
  DatasetConfig c = DatasetConfig::uniform(4);
  c.counts[1][2] = 0;
  EXPECT_EQ(DatasetConfig::from_json(c.to_json()).counts, c.counts);
  EXPECT_EQ(c.total(), 396);
}

}  // namespace
}  // namespace clood
