#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "clood/dataset.hpp"
#include "json.hpp"

namespace clood {

// Which font each character withholds from training. Always a cyclic shift,
// held_font_of_char[c] = (c + shift) mod 10, so it is a bijection and every
// font stays in the training distribution of nine characters.
struct HoldoutMap {
  std::array<int, glyph::kNumChars> held_font_of_char{};
  int shift = 1;

  bool is_held(int char_id, int font_id) const { return held_font_of_char[char_id] == font_id; }
  bool operator==(const HoldoutMap&) const = default;
};

HoldoutMap holdout_with_shift(int shift);
// Shift drawn uniformly from [1, 10) using seed.
HoldoutMap make_holdout(std::uint64_t seed);

// Example indices into the source Dataset.
struct DataSplit {
  std::vector<std::size_t> pool_train;
  std::vector<std::size_t> iid_test;
  std::vector<std::size_t> ood_test;
};

// Held-out cells go entirely to ood_test. Every other cell is split in
// dataset order: the first round(n * train_fraction) examples to
// pool_train, the remainder to iid_test.
DataSplit split_dataset(const Dataset& dataset, const HoldoutMap& holdout, double train_fraction);

struct Experience {
  std::vector<int> chars;
  std::vector<std::size_t> train;
  std::array<int, glyph::kNumFonts> font_counts{};

  int fonts_present() const;
  bool operator==(const Experience&) const = default;
};

struct Scenario {
  int num_tasks = 1;
  std::vector<Experience> experiences;
  std::vector<std::size_t> iid_test;
  std::vector<std::size_t> ood_test;
  HoldoutMap holdout;
  std::uint64_t seed = 0;
  bool permuted = false;
  std::string dataset_hash;

  nlohmann::json to_json() const;
  static Scenario from_json(const nlohmann::json& j);
  bool operator==(const Scenario&) const = default;
};

bool valid_num_tasks(int num_tasks);

// Char ids are blocked into experiences of 10/T consecutive chars, after a
// seed-driven permutation when permute is set (identity otherwise).
Scenario build_experiences(const Dataset& dataset, const DataSplit& split,
                           const HoldoutMap& holdout, int num_tasks, std::uint64_t seed,
                           bool permute = false);

}  // namespace clood
