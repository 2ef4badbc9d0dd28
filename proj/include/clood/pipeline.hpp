#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "clood/config.hpp"
#include "json.hpp"

// The four pipeline commands. Each returns a JSON summary of what it did
// (or, with dry_run, would do).
//
// Layout under the output root:
//   dataset/   dataset.clood, dataset.json, samples.png
//   runs/      registry.jsonl, <run_id>/{config.json, scenario.json, metrics.csv, buffer.json, checkpoints/}
//   results/   grid.csv, summary.json
//   probes/    probes.csv, curves.csv, summary.json
//   report/    gap_vs_memory.csv, probe_summary.csv, experience_curves.csv, report.json
namespace clood::pipeline {

struct Options {
  ExperimentConfig config;
  std::filesystem::path out;  // resolved output root
  int jobs = 1;
  bool dry_run = false;
};

// --out wins over CLOOD_OUT, which wins over the config's output.dir.
std::filesystem::path resolve_output(const std::optional<std::string>& flag, const char* env,
                                     const ExperimentConfig& config);

nlohmann::json cmd_generate(const Options& opt);
// Throws RunFailure after writing results if any run failed.
nlohmann::json cmd_train(const Options& opt);
nlohmann::json cmd_probe(const Options& opt);
nlohmann::json cmd_report(const Options& opt);

// Per-run identity: run config plus dataset and scenario hashes. A registry
// entry only resumes a run whose fingerprint still matches.
std::string run_fingerprint(const RunConfig& run, const std::string& dataset_hash,
                            const std::string& scenario_hash);

// Latest registry status per run id.
std::map<std::string, nlohmann::json> read_registry(const std::filesystem::path& out);

}  // namespace clood::pipeline
