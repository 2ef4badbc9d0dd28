#include "clood/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "clood/errors.hpp"
#include "clood/rng.hpp"

namespace clood {

HoldoutMap holdout_with_shift(int shift) {
  if (shift < 1 || shift >= glyph::kNumFonts) {
    throw DomainError("holdout shift must be in [1, 10): " + std::to_string(shift));
  }
  HoldoutMap h;
  h.shift = shift;
  for (int c = 0; c < glyph::kNumChars; ++c) h.held_font_of_char[c] = (c + shift) % glyph::kNumFonts;
  return h;
}

HoldoutMap make_holdout(std::uint64_t seed) {
  Rng rng(derive_seed(seed, tag("holdout")));
  return holdout_with_shift(1 + static_cast<int>(rng.below(glyph::kNumFonts - 1)));
}

DataSplit split_dataset(const Dataset& dataset, const HoldoutMap& holdout, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DomainError("train_fraction must lie in (0, 1)");
  }
  std::array<std::array<std::vector<std::size_t>, glyph::kNumFonts>, glyph::kNumChars> cells;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const LabelPair l = dataset.labels(i);
    cells[l.char_id][l.font_id].push_back(i);
  }
  DataSplit split;
  for (int c = 0; c < glyph::kNumChars; ++c) {
    for (int f = 0; f < glyph::kNumFonts; ++f) {
      const auto& idx = cells[c][f];
      const std::string cell = "(char " + std::to_string(c) + ", font " + std::to_string(f) + ")";
      if (idx.empty()) throw DomainError("empty cell " + cell + " in dataset");
      if (holdout.is_held(c, f)) {
        split.ood_test.insert(split.ood_test.end(), idx.begin(), idx.end());
        continue;
      }
      const auto n = static_cast<long>(idx.size());
      const long n_train = std::lround(static_cast<double>(n) * train_fraction);
      if (n_train < 1 || n_train >= n) {
        throw DomainError("cell " + cell + " has " + std::to_string(n) +
                          " examples; cannot split into non-empty train and test parts");
      }
      split.pool_train.insert(split.pool_train.end(), idx.begin(), idx.begin() + n_train);
      split.iid_test.insert(split.iid_test.end(), idx.begin() + n_train, idx.end());
    }
  }
  return split;
}

int Experience::fonts_present() const {
  return static_cast<int>(std::count_if(font_counts.begin(), font_counts.end(),
                                        [](int n) { return n > 0; }));
}

bool valid_num_tasks(int t) { return t == 1 || t == 2 || t == 4 || t == 5 || t == 10; }

Scenario build_experiences(const Dataset& dataset, const DataSplit& split,
                           const HoldoutMap& holdout, int num_tasks, std::uint64_t seed,
                           bool permute) {
  if (!valid_num_tasks(num_tasks)) {
    throw DomainError("number of tasks must be one of {1,2,4,5,10}, got " +
                      std::to_string(num_tasks));
  }
  // T = 4 does not divide 10; blocks are then 3,3,2,2 (sizes differ by at
  // most one, larger blocks first).
  std::vector<int> order(glyph::kNumChars);
  std::iota(order.begin(), order.end(), 0);
  if (permute) {
    Rng rng(derive_seed(seed, tag("char-permutation")));
    rng.shuffle(order.begin(), order.end());
  }
  Scenario s;
  s.num_tasks = num_tasks;
  s.holdout = holdout;
  s.seed = seed;
  s.permuted = permute;
  s.dataset_hash = dataset.content_hash();
  s.iid_test = split.iid_test;
  s.ood_test = split.ood_test;
  s.experiences.resize(num_tasks);

  std::array<int, glyph::kNumChars> owner{};
  const int base = glyph::kNumChars / num_tasks;
  const int extra = glyph::kNumChars % num_tasks;
  int pos = 0;
  for (int t = 0; t < num_tasks; ++t) {
    const int size = base + (t < extra ? 1 : 0);
    for (int k = 0; k < size; ++k, ++pos) {
      s.experiences[t].chars.push_back(order[pos]);
      owner[order[pos]] = t;
    }
  }
  for (std::size_t i : split.pool_train) {
    const LabelPair l = dataset.labels(i);
    if (holdout.is_held(l.char_id, l.font_id)) {
      throw DomainError("held-out pair found in the training pool");
    }
    Experience& e = s.experiences[owner[l.char_id]];
    e.train.push_back(i);
    ++e.font_counts[l.font_id];
  }
  for (int t = 0; t < num_tasks; ++t) {
    if (s.experiences[t].train.empty()) {
      throw DomainError("experience " + std::to_string(t) + " has no training examples");
    }
  }
  return s;
}

nlohmann::json Scenario::to_json() const {
  nlohmann::json exps = nlohmann::json::array();
  for (const Experience& e : experiences) {
    exps.push_back({{"chars", e.chars},
                    {"num_train", e.train.size()},
                    {"font_counts", e.font_counts},
                    {"fonts_present", e.fonts_present()},
                    {"train", e.train}});
  }
  return {{"seed", seed},
          {"num_tasks", num_tasks},
          {"permuted", permuted},
          {"holdout", {{"shift", holdout.shift}, {"held_font_of_char", holdout.held_font_of_char}}},
          {"dataset_hash", dataset_hash},
          {"num_iid_test", iid_test.size()},
          {"num_ood_test", ood_test.size()},
          {"experiences", exps},
          {"iid_test", iid_test},
          {"ood_test", ood_test}};
}

Scenario Scenario::from_json(const nlohmann::json& j) {
  Scenario s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.num_tasks = j.at("num_tasks").get<int>();
  s.permuted = j.at("permuted").get<bool>();
  s.holdout = holdout_with_shift(j.at("holdout").at("shift").get<int>());
  if (s.holdout.held_font_of_char !=
      j.at("holdout").at("held_font_of_char").get<std::array<int, glyph::kNumChars>>()) {
    throw DomainError("scenario manifest holdout map is not the cyclic shift it declares");
  }
  s.dataset_hash = j.at("dataset_hash").get<std::string>();
  for (const auto& e : j.at("experiences")) {
    Experience x;
    x.chars = e.at("chars").get<std::vector<int>>();
    x.train = e.at("train").get<std::vector<std::size_t>>();
    x.font_counts = e.at("font_counts").get<std::array<int, glyph::kNumFonts>>();
    s.experiences.push_back(std::move(x));
  }
  s.iid_test = j.at("iid_test").get<std::vector<std::size_t>>();
  s.ood_test = j.at("ood_test").get<std::vector<std::size_t>>();
  if (static_cast<int>(s.experiences.size()) != s.num_tasks) {
    throw DomainError("scenario manifest experience count does not match num_tasks");
  }
  return s;
}

}  // namespace clood
