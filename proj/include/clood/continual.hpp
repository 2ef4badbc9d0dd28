#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clood/dataset.hpp"
#include "clood/network.hpp"
#include "clood/replay.hpp"
#include "clood/scenario.hpp"
#include "json.hpp"

namespace clood {

enum class Precision { kFloat32, kFloat64 };

struct RunConfig {
  int num_tasks = 1;
  int memory_size = 0;  // 0 = naive fine-tuning, no buffer
  int epochs = 20;      // per experience
  int batch_size = 64;
  std::uint64_t seed = 0;  // init, shuffling, reservoir and memory streams derive from it
  int eval_every = 1;      // evaluate after every k-th experience; the last is always evaluated
  Precision precision = Precision::kFloat32;
  nn::AdamConfig adam;
  std::string run_id;  // empty: "T<T>_M<M>_s<seed>"

  std::string id() const;
  void validate() const;
  nlohmann::json to_json() const;
};

struct MetricRecord {
  std::string run_id;
  int num_tasks = 0;
  int memory_size = 0;
  std::uint64_t seed = 0;
  int experience = 0;
  std::string split;  // "iid_test" | "ood_test"
  double accuracy = 0.0;
  double loss = 0.0;
  double wall_time = 0.0;  // seconds since run start; not serialized to CSV
};

class MetricsTable {
 public:
  static constexpr std::string_view kCsvHeader = "run_id,T,M,seed,experience,split,accuracy,loss";

  void add(MetricRecord r) { records_.push_back(std::move(r)); }
  void append(const MetricsTable& other);
  const std::vector<MetricRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }

  // Fixed formatting (%.17g) so identical runs give identical bytes.
  std::string to_csv(bool header = true) const;
  static MetricsTable from_csv(std::string_view text);

 private:
  std::vector<MetricRecord> records_;
};

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t count = 0;
};

// Fraction of examples whose argmax logit equals the font label, and the
// mean cross-entropy. Throws DomainError on an empty split.
template <typename T>
EvalResult evaluate(const nn::Network<T>& net, const Dataset& dataset,
                    std::span<const std::size_t> split, int batch_size = 256);

// Accuracy of precomputed logits; ties go to the lowest class.
template <typename T>
double accuracy_from_logits(const nn::Tensor<T>& logits, std::span<const int> labels);

// epochs x ceil(N_t / B) er_steps over seeded shuffles. Returns the number
// of optimizer steps taken. Throws DomainError for an empty experience.
template <typename T>
std::int64_t train_experience(nn::Network<T>& net, nn::AdamState<T>& opt, ReservoirBuffer* buffer,
                              const Dataset& dataset, const Experience& experience,
                              const RunConfig& config, Rng& shuffle_rng, Rng& memory_rng);

// Closed-form optimizer step count for a full run.
std::int64_t expected_steps(const Scenario& scenario, const RunConfig& config);

struct RunOutcome {
  MetricsTable metrics;
  std::int64_t optimizer_steps = 0;
  std::vector<std::filesystem::path> checkpoints;  // one per experience when a directory is given
  std::string final_checkpoint_hash;                // sha256 of the serialized final network
  nlohmann::json buffer_dump;                       // null when memory_size == 0
  double wall_time = 0.0;
};

// Trains over every experience in order, evaluating on the shared IID and
// OOD test sets. Checkpoints go to <checkpoint_dir>/exp_<t>.ckpt when set.
RunOutcome run_continual(const Dataset& dataset, const Scenario& scenario, const RunConfig& config,
                         const std::filesystem::path& checkpoint_dir = {});

struct CellAggregate {
  int num_tasks = 0;
  int memory_size = 0;
  int runs = 0;
  double iid_mean = 0, iid_std = 0;
  double ood_mean = 0, ood_std = 0;
  double gap_mean = 0, gap_std = 0;  // gap = iid - ood, per run then aggregated
};

// Final-experience accuracies grouped by (T, M), ordered by T then M.
// std is the sample standard deviation (0 for a single run).
std::vector<CellAggregate> aggregate(const MetricsTable& table);
nlohmann::json aggregates_to_json(const std::vector<CellAggregate>& cells);

struct GridOptions {
  int jobs = 1;
  // Where a run keeps its checkpoints; no checkpoints when unset.
  std::function<std::filesystem::path(const RunConfig&)> checkpoint_dir;
  // Metrics of an already completed run; returning a value skips the run.
  std::function<std::optional<MetricsTable>(const RunConfig&)> resume;
  // Called once per executed run, serialized across workers. outcome is
  // null when the run failed, with the message in error.
  std::function<void(const RunConfig&, const RunOutcome*, const std::string& error)> on_finish;
};

struct GridResult {
  MetricsTable metrics;  // runs in config order
  std::vector<CellAggregate> aggregates;
  std::vector<std::pair<std::string, std::string>> failures;  // (run id, message)
  int executed = 0;
  int resumed = 0;
};

// Runs every config against the scenario for its T. A failing run is
// recorded and the grid continues.
GridResult run_grid(const Dataset& dataset, const std::map<int, Scenario>& scenarios,
                    const std::vector<RunConfig>& configs, const GridOptions& options = {});

}  // namespace clood
