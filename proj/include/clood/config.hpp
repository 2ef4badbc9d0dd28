#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "clood/continual.hpp"
#include "clood/dataset.hpp"
#include "clood/probe.hpp"
#include "json.hpp"

namespace clood {

// Experiment configuration. Text files use a small TOML subset:
//
//   # comment
//   [section]
//   key = 12 | 4e-4 | true | "text" | [1, 2, 3] | [[...], ...]
//
// Files ending in .json are read as JSON with the same layout. Every
// section and key is optional; unknown ones are rejected.
struct ExperimentConfig {
  struct DatasetSection {
    DatasetConfig counts = DatasetConfig::uniform(100);
    std::uint64_t seed = 1;
  } dataset;

  struct ScenarioSection {
    std::vector<int> tasks = {1, 2, 4, 5, 10};
    int holdout_shift = 0;  // 0 draws the shift from seed
    double train_fraction = 0.8;
    std::uint64_t seed = 1;
    bool permute = false;
  } scenario;

  struct TrainingSection {
    std::vector<int> memory = {0, 50, 100, 250, 500, 1000};
    int epochs = 20;
    int batch_size = 64;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    Precision precision = Precision::kFloat32;
    double learning_rate = 4e-4;
    int eval_every = 1;
  } training;

  struct ProbeSection {
    std::vector<probe::Task> tasks = {probe::Task::kFont, probe::Task::kChar, probe::Task::kFontChar};
    std::vector<probe::Regime> regimes = {probe::Regime::kIidOnly, probe::Regime::kIidPlusOod};
    probe::ProbeSpec spec;
    std::vector<std::string> runs;  // run ids to probe; empty = every completed run
    bool curves = true;             // char probe after each experience
  } probe;

  std::string output_dir = "out";

  // Cross-product of scenario.tasks x training.memory x training.seeds, in that nesting order.
  std::vector<RunConfig> run_configs() const;
  HoldoutMap holdout() const;

  nlohmann::json to_json() const;
  // Throws ConfigError naming the offending key.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

// Parses the TOML subset into JSON. Throws ConfigError with a line number.
nlohmann::json parse_config_text(std::string_view text);

ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace clood
