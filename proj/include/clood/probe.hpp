#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clood/dataset.hpp"
#include "clood/network.hpp"
#include "clood/scenario.hpp"

// Probes trained on frozen activations: which factors does a checkpoint's
// representation encode, and does that survive held-out (char, font) pairs?
namespace clood::probe {

enum class Task { kFont, kChar, kFontChar };
enum class Regime { kIidOnly, kIidPlusOod };

std::string_view to_string(Task t);
std::string_view to_string(Regime r);
Task parse_task(std::string_view s);
Regime parse_regime(std::string_view s);
int num_classes(Task t);
int task_label(Task t, const LabelPair& l);

struct ProbeSpec {
  std::string tap = "repr";
  Task task = Task::kFont;
  Regime regime = Regime::kIidOnly;
  std::vector<int> hidden = {16, 32, 64, 128, 256};
  std::vector<double> learning_rates = {1e-1, 5e-2, 1e-2, 5e-3};
  int epochs = 100;
  double momentum = 0.9;
  int batch_size = 128;      // 0 = full batch; full-batch descent underfits the 100-class task
  bool linear = false;       // single affine layer; hidden grid ignored
  double val_fraction = 0.1;  // stratified holdout of probe-training rows for model selection
  std::uint64_t seed = 0;
};

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FeatureSet {
  Matrix x;                       // (rows, width)
  std::vector<LabelPair> labels;  // aligned with rows
  std::vector<std::size_t> indices;
};

// Activations of one tap for the listed examples, rows in input order.
// Throws DomainError for an unknown tap.
template <typename T>
FeatureSet extract_features(const nn::Network<T>& net, const Dataset& dataset,
                            std::span<const std::size_t> indices, std::string_view tap,
                            int batch_size = 256);

struct LabeledRows {
  Matrix x;
  std::vector<int> y;
};

LabeledRows labeled(const FeatureSet& f, Task task);
LabeledRows concat(const LabeledRows& a, const LabeledRows& b);

struct GridPoint {
  int hidden = 0;
  double lr = 0.0;
  double val_accuracy = 0.0;
};

struct ProbeResult {
  std::string checkpoint;
  std::string tap;
  Task task = Task::kFont;
  Regime regime = Regime::kIidOnly;
  int hidden = 0;  // 0 for the linear probe
  double lr = 0.0;
  double val_accuracy = 0.0;
  double iid_accuracy = 0.0;
  double ood_accuracy = 0.0;
  int train_classes = 0;  // distinct labels among probe-training rows
  std::size_t train_rows = 0;
  std::vector<GridPoint> grid;
};

// Grid search over (hidden, lr); each point trains from a fresh seeded
// init for a fixed budget. Selection maximizes validation accuracy with ties
// going to the smaller hidden size, then the larger learning rate. Test
// sets may be empty (accuracy reported as 0).
ProbeResult train_probe(const LabeledRows& train, const LabeledRows& iid_test,
                        const LabeledRows& ood_test, const ProbeSpec& spec);

// OOD examples split per held-out pair: the first half (dataset order) for
// probe training in the iid_plus_ood regime, the rest for testing. Both
// regimes report OOD accuracy on the test half.
struct OodHalves {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
OodHalves split_ood(const Dataset& dataset, std::span<const std::size_t> ood_test);

// Features of one checkpoint on every split a battery needs.
struct ProbeFeatures {
  FeatureSet pool_train;
  FeatureSet iid_test;
  FeatureSet ood_train;
  FeatureSet ood_test;
};

template <typename T>
ProbeFeatures extract_probe_features(const nn::Network<T>& net, const Dataset& dataset,
                                     const Scenario& scenario, std::string_view tap);

ProbeResult run_probe(const ProbeFeatures& features, const ProbeSpec& spec);

// Every (task, regime) pair, tasks outermost.
template <typename T>
std::vector<ProbeResult> probe_battery(const nn::Network<T>& net, const Dataset& dataset,
                                       const Scenario& scenario, std::span<const Task> tasks,
                                       std::span<const Regime> regimes, const ProbeSpec& base,
                                       const std::string& checkpoint_name);

// A fresh probe per checkpoint, in order. Throws DomainError if any
// checkpoint file is missing (all missing paths are listed).
std::vector<ProbeResult> probe_over_experiences(const std::vector<std::filesystem::path>& checkpoints,
                                                const Dataset& dataset, const Scenario& scenario,
                                                const ProbeSpec& spec);

inline constexpr std::string_view kCsvHeader = "checkpoint,tap,task,regime,h,lr,split,accuracy";

// Two rows per result (iid_test, ood_test).
std::string to_csv_rows(const ProbeResult& r);

}  // namespace clood::probe
