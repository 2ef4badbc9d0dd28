#include <gtest/gtest.h>

#include <set>

#include "clood/batch.hpp"
#include "clood/checkpoint.hpp"
#include "clood/errors.hpp"
#include "clood/probe.hpp"
#include "clood/scenario.hpp"
#include "test_util.hpp"

namespace clood::probe {
namespace {

// Well separated Gaussian clusters, one per class.
LabeledRows blobs(int classes, int per_class, int dim, std::uint64_t seed, double spread = 0.3) {
  Rng rng(seed);
  Rng centers(999);
  std::vector<std::vector<float>> mu(classes, std::vector<float>(dim));
  for (auto& m : mu)
    for (float& v : m) v = static_cast<float>(centers.uniform(-3.0, 3.0));
  LabeledRows out;
  out.x.resize(classes * per_class, dim);
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      const int r = c * per_class + i;
      for (int d = 0; d < dim; ++d) {
        // Sum of uniforms, roughly normal.
        double z = 0;
        for (int k = 0; k < 4; ++k) z += rng.uniform(-1.0, 1.0);
        out.x(r, d) = mu[c][d] + static_cast<float>(spread * z);
      }
      out.y.push_back(c);
    }
  return out;
}

ProbeSpec quick_spec(Task task = Task::kFont) {
  ProbeSpec s;
  s.task = task;
  s.hidden = {16, 32};
  s.learning_rates = {1e-1, 1e-2};
  s.epochs = 60;
  return s;
}

TEST(Probe, NamesRoundTrip) {
  for (Task t : {Task::kFont, Task::kChar, Task::kFontChar}) EXPECT_EQ(parse_task(to_string(t)), t);
  for (Regime r : {Regime::kIidOnly, Regime::kIidPlusOod}) EXPECT_EQ(parse_regime(to_string(r)), r);
  EXPECT_THROW(parse_task("colour"), DomainError);
  EXPECT_THROW(parse_regime("ood_only"), DomainError);
  EXPECT_EQ(num_classes(Task::kFont), 10);
  EXPECT_EQ(num_classes(Task::kChar), 10);
  EXPECT_EQ(num_classes(Task::kFontChar), 100);
}

TEST(Probe, DefaultGridMatchesReferenceSizes) {
  const ProbeSpec s;
  EXPECT_EQ(s.hidden, (std::vector<int>{16, 32, 64, 128, 256}));
  EXPECT_EQ(s.learning_rates, (std::vector<double>{1e-1, 5e-2, 1e-2, 5e-3}));
  EXPECT_EQ(s.momentum, 0.9);
  EXPECT_EQ(s.tap, "repr");
}

TEST(Probe, LabelAlgebraIsBijective) {
  std::set<int> seen;
  for (int f = 0; f < 10; ++f)
    for (int c = 0; c < 10; ++c) {
      const LabelPair l{static_cast<std::uint8_t>(c), static_cast<std::uint8_t>(f)};
      const int fc = task_label(Task::kFontChar, l);
      EXPECT_EQ(fc, 10 * f + c);
      EXPECT_EQ(font_of(fc), f);
      EXPECT_EQ(char_of(fc), c);
      EXPECT_EQ(task_label(Task::kFont, l), f);
      EXPECT_EQ(task_label(Task::kChar, l), c);
      seen.insert(fc);
    }
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(*seen.begin(), 0);
  EXPECT_EQ(*seen.rbegin(), 99);
}

TEST(Probe, SeparatesGaussianBlobs) {
  const auto train = blobs(10, 60, 8, 1), test = blobs(10, 30, 8, 2);
  const ProbeResult r = train_probe(train, test, test, quick_spec());
  EXPECT_GE(r.iid_accuracy, 0.99);
  EXPECT_EQ(r.ood_accuracy, r.iid_accuracy);
  EXPECT_EQ(r.grid.size(), 4u);
  EXPECT_EQ(r.train_classes, 10);
  EXPECT_EQ(r.train_rows, train.y.size());
}

TEST(Probe, LinearVariantSeparatesBlobs) {
  ProbeSpec s = quick_spec();
  s.linear = true;
  const auto train = blobs(10, 60, 8, 1), test = blobs(10, 30, 8, 2);
  const ProbeResult r = train_probe(train, test, {}, s);
  EXPECT_GE(r.iid_accuracy, 0.99);
  EXPECT_EQ(r.hidden, 0);
  EXPECT_EQ(r.ood_accuracy, 0.0);
}

TEST(Probe, MiniBatchVariantSeparatesBlobs) {
  ProbeSpec s = quick_spec();
  s.batch_size = 32;
  s.epochs = 10;
  const auto train = blobs(10, 60, 8, 1), test = blobs(10, 30, 8, 2);
  EXPECT_GE(train_probe(train, test, test, s).iid_accuracy, 0.99);
}

TEST(Probe, SelectionTakesBestValidationWithSmallerHiddenOnTies) {
  const auto train = blobs(10, 60, 8, 1), test = blobs(10, 30, 8, 2);
  const ProbeResult r = train_probe(train, test, test, quick_spec());
  double best = 0;
  for (const auto& g : r.grid) best = std::max(best, g.val_accuracy);
  EXPECT_EQ(r.val_accuracy, best);
  for (const auto& g : r.grid) {
    if (g.val_accuracy == best) {
      EXPECT_EQ(r.hidden, g.hidden);
      EXPECT_EQ(r.lr, g.lr);
      break;
    }
  }
}

TEST(Probe, Deterministic) {
  const auto train = blobs(5, 20, 4, 3, 1.5), test = blobs(5, 10, 4, 4, 1.5);
  const ProbeResult a = train_probe(train, test, test, quick_spec());
  const ProbeResult b = train_probe(train, test, test, quick_spec());
  EXPECT_EQ(a.iid_accuracy, b.iid_accuracy);
  ASSERT_EQ(a.grid.size(), b.grid.size());
  for (std::size_t i = 0; i < a.grid.size(); ++i) EXPECT_EQ(a.grid[i].val_accuracy, b.grid[i].val_accuracy);
}

TEST(Probe, RejectsBadInput) {
  const auto train = blobs(3, 10, 4, 1);
  ProbeSpec s = quick_spec();
  EXPECT_THROW(train_probe({}, train, train, s), DomainError);
  s.epochs = 0;
  EXPECT_THROW(train_probe(train, train, train, s), DomainError);
  s = quick_spec();
  s.hidden.clear();
  EXPECT_THROW(train_probe(train, train, train, s), DomainError);
  s = quick_spec();
  s.val_fraction = 1.0;
  EXPECT_THROW(train_probe(train, train, train, s), DomainError);
  LabeledRows bad = train;
  bad.y[0] = 10;
  EXPECT_THROW(train_probe(bad, train, train, quick_spec()), DomainError);
  LabeledRows narrow;
  narrow.x.resize(1, 2);
  narrow.y = {0};
  EXPECT_THROW(concat(train, narrow), DomainError);
}

class ProbeOnDataset : public ::testing::Test {
 protected:
  const Dataset& ds = testing::cached_dataset(10, 1);
  HoldoutMap holdout = holdout_with_shift(3);
  Scenario scenario = build_experiences(ds, split_dataset(ds, holdout, 0.8), holdout, 2, 1);
};

TEST_F(ProbeOnDataset, FeatureShapeAndZeroNetwork) {
  const nn::Network<float> zero;
  std::vector<std::size_t> idx(100);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const FeatureSet f = extract_features(zero, ds, idx, "repr", 33);
  EXPECT_EQ(f.x.rows(), 100);
  EXPECT_EQ(f.x.cols(), 128);
  EXPECT_EQ(f.x.cwiseAbs().maxCoeff(), 0.0f);
  EXPECT_EQ(f.indices, idx);
  EXPECT_EQ(f.labels[42], ds.labels(42));
  EXPECT_THROW(extract_features(zero, ds, idx, "pixels"), DomainError);
}

TEST_F(ProbeOnDataset, OodHalvesSplitEachHeldOutCell) {
  const OodHalves h = split_ood(ds, scenario.ood_test);
  EXPECT_EQ(h.train.size(), 50u);
  EXPECT_EQ(h.test.size(), 50u);
  std::map<int, int> per_cell;
  for (std::size_t i : h.train) ++per_cell[task_label(Task::kFontChar, ds.labels(i))];
  EXPECT_EQ(per_cell.size(), 10u);
  for (const auto& [cell, n] : per_cell) EXPECT_EQ(n, 5);
  for (std::size_t i = 0; i < h.train.size(); ++i) EXPECT_LT(h.train[i], h.test[i]);
}

TEST_F(ProbeOnDataset, BatteryHasSixResultsAndStructuralZero) {
  nn::Network<float> net;
  nn::init_params(net, 1);
  const std::vector<Task> tasks = {Task::kFont, Task::kChar, Task::kFontChar};
  const std::vector<Regime> regimes = {Regime::kIidOnly, Regime::kIidPlusOod};
  ProbeSpec base = quick_spec();
  base.epochs = 20;
  const auto results = probe_battery(net, ds, scenario, tasks, regimes, base, "init");
  ASSERT_EQ(results.size(), 6u);
  EXPECT_EQ(results[0].task, Task::kFont);
  EXPECT_EQ(results[1].regime, Regime::kIidPlusOod);
  const ProbeResult& fc_iid = results[4];
  EXPECT_EQ(fc_iid.task, Task::kFontChar);
  EXPECT_EQ(fc_iid.train_classes, 90);
  EXPECT_EQ(fc_iid.ood_accuracy, 0.0);
  EXPECT_EQ(results[5].train_classes, 100);
  for (const auto& r : results) EXPECT_EQ(r.checkpoint, "init");
  const std::string rows = to_csv_rows(results[0]);
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 2);
  EXPECT_NE(rows.find("init,repr,font,iid_only,"), std::string::npos);
}

TEST_F(ProbeOnDataset, OverExperiencesListsMissingCheckpoints) {
  testing::TempDir dir;
  nn::Network<float> net;
  nn::init_params(net, 1);
  nn::save_checkpoint(dir.path() / "a.ckpt", net, 0, 1);
  ProbeSpec s = quick_spec(Task::kChar);
  s.epochs = 5;
  try {
    probe_over_experiences({dir.path() / "a.ckpt", dir.path() / "b.ckpt", dir.path() / "c.ckpt"}, ds, scenario, s);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("b.ckpt"), std::string::npos);
    EXPECT_NE(msg.find("c.ckpt"), std::string::npos);
  }
  const auto r = probe_over_experiences({dir.path() / "a.ckpt", dir.path() / "a.ckpt"}, ds, scenario, s);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].iid_accuracy, r[1].iid_accuracy);
}

}  // namespace
}  // namespace clood::probe
