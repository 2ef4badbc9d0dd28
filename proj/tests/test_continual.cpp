#include <gtest/gtest.h>

#include <cmath>

#include "clood/batch.hpp"
#include "clood/continual.hpp"
#include "clood/errors.hpp"
#include "clood/scenario.hpp"
#include "test_util.hpp"

namespace clood {
namespace {

Scenario small_scenario(int T, int per_cell = 5) {
  const Dataset& ds = testing::cached_dataset(per_cell, 1);
  const HoldoutMap h = holdout_with_shift(1);
  return build_experiences(ds, split_dataset(ds, h, 0.8), h, T, 1);
}

RunConfig small_run(int T, int M, std::uint64_t seed, int epochs = 1) {
  RunConfig c;
  c.num_tasks = T;
  c.memory_size = M;
  c.seed = seed;
  c.epochs = epochs;
  c.batch_size = 64;
  return c;
}

TEST(RunConfig, IdAndValidation) {
  EXPECT_EQ(small_run(5, 50, 2).id(), "T5_M50_s2");
  RunConfig named = small_run(5, 50, 2);
  named.run_id = "custom";
  EXPECT_EQ(named.id(), "custom");
  EXPECT_THROW(small_run(3, 0, 0).validate(), DomainError);
  EXPECT_THROW(small_run(2, 60, 0).validate(), DomainError);
  EXPECT_THROW(small_run(2, 0, 0, 0).validate(), DomainError);
  RunConfig bad_batch = small_run(1, 0, 0);
  bad_batch.batch_size = 0;
  EXPECT_THROW(bad_batch.validate(), DomainError);
}

TEST(TrainExperience, StepCountIsEpochsTimesBatches) {
  const Dataset& ds = testing::cached_dataset(2, 1);
  Experience e;
  for (std::size_t i = 0; i < 128; ++i) e.train.push_back(i);
  RunConfig cfg = small_run(1, 0, 0);
  nn::Network<float> net;
  nn::init_params(net, 1);
  auto opt = nn::AdamState<float>::for_params(net.params());
  Rng s(1), m(2);
  EXPECT_EQ(train_experience(net, opt, nullptr, ds, e, cfg, s, m), 2);
  e.train.push_back(130);
  cfg.epochs = 2;
  EXPECT_EQ(train_experience(net, opt, nullptr, ds, e, cfg, s, m), 6);
  EXPECT_EQ(opt.step, 8);
  EXPECT_THROW(train_experience(net, opt, nullptr, ds, Experience{}, cfg, s, m), DomainError);
}

TEST(TrainExperience, ReservoirObservesEachExampleOnce) {
  const Dataset& ds = testing::cached_dataset(2, 1);
  Experience e;
  for (std::size_t i = 0; i < 100; ++i) e.train.push_back(i);
  RunConfig cfg = small_run(1, 50, 0, 3);
  nn::Network<float> net;
  auto opt = nn::AdamState<float>::for_params(net.params());
  ReservoirBuffer buf(50, 1);
  Rng s(1), m(2);
  train_experience(net, opt, &buf, ds, e, cfg, s, m);
  EXPECT_EQ(buf.seen(), 100u);
  EXPECT_EQ(buf.size(), 50u);
}

TEST(ExpectedSteps, ClosedForm) {
  const Scenario sc = small_scenario(5);
  RunConfig cfg = small_run(5, 0, 0, 3);
  std::int64_t manual = 0;
  for (const auto& e : sc.experiences) manual += 3 * ((static_cast<std::int64_t>(e.train.size()) + 63) / 64);
  EXPECT_EQ(expected_steps(sc, cfg), manual);
}

TEST(Evaluate, ZeroNetworkPredictsClassZero) {
  const Dataset& ds = testing::cached_dataset(2, 1);
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const nn::Network<float> net;
  const EvalResult r = evaluate(net, ds, all, 37);
  std::size_t font0 = 0;
  for (std::size_t i : all) font0 += ds.labels(i).font_id == 0;
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(font0) / ds.size());
  EXPECT_NEAR(r.loss, std::log(10.0), 1e-5);
  EXPECT_EQ(r.count, ds.size());
  EXPECT_THROW(evaluate(net, ds, {}), DomainError);
}

TEST(Evaluate, AccuracyFromLogitsOracle) {
  nn::Tensor<double> logits({4, 3});
  logits.data = {0, 1, 0, 5, 0, 0, 0, 0, 0, 1, 2, 3};
  const std::vector<int> labels = {1, 0, 0, 1};
  EXPECT_DOUBLE_EQ(accuracy_from_logits(logits, labels), 0.75);
  const std::vector<int> perfect = {1, 0, 0, 2};
  EXPECT_DOUBLE_EQ(accuracy_from_logits(logits, perfect), 1.0);
  const std::vector<int> short_labels = {1};
  EXPECT_THROW(accuracy_from_logits(logits, short_labels), DomainError);
}

TEST(MetricsTable, CsvRoundTrip) {
  MetricsTable t;
  t.add({"T2_M0_s1", 2, 0, 1, 0, "iid_test", 0.1234567890123, 2.5, 9.0});
  t.add({"T2_M0_s1", 2, 0, 1, 1, "ood_test", 1.0 / 3.0, 0.0, 1.0});
  const std::string csv = t.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), MetricsTable::kCsvHeader);
  const MetricsTable back = MetricsTable::from_csv(csv);
  ASSERT_EQ(back.records().size(), 2u);
  EXPECT_EQ(back.records()[1].accuracy, 1.0 / 3.0);
  EXPECT_EQ(back.records()[0].split, "iid_test");
  EXPECT_EQ(back.to_csv(), csv);
  EXPECT_THROW(MetricsTable::from_csv("bad,header\n"), IoError);
  EXPECT_THROW(MetricsTable::from_csv(std::string(MetricsTable::kCsvHeader) + "\nx,1\n"), IoError);
}

TEST(Aggregate, FinalExperienceMeanStdAndGap) {
  MetricsTable t;
  const double iid[] = {0.9, 0.8, 0.7}, ood[] = {0.5, 0.6, 0.2};
  for (int s = 0; s < 3; ++s) {
    const std::string id = "T2_M50_s" + std::to_string(s);
    t.add({id, 2, 50, static_cast<std::uint64_t>(s), 0, "iid_test", 0.1, 0, 0});
    t.add({id, 2, 50, static_cast<std::uint64_t>(s), 0, "ood_test", 0.1, 0, 0});
    t.add({id, 2, 50, static_cast<std::uint64_t>(s), 1, "iid_test", iid[s], 0, 0});
    t.add({id, 2, 50, static_cast<std::uint64_t>(s), 1, "ood_test", ood[s], 0, 0});
  }
  t.add({"T1_M0_s0", 1, 0, 0, 0, "iid_test", 0.95, 0, 0});
  t.add({"T1_M0_s0", 1, 0, 0, 0, "ood_test", 0.55, 0, 0});
  const auto cells = aggregate(t);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].num_tasks, 1);
  EXPECT_EQ(cells[0].iid_std, 0.0);
  const CellAggregate& c = cells[1];
  EXPECT_EQ(c.runs, 3);
  EXPECT_NEAR(c.iid_mean, 0.8, 1e-12);
  EXPECT_NEAR(c.iid_std, 0.1, 1e-12);
  EXPECT_NEAR(c.ood_mean, 13.0 / 30.0, 1e-12);
  // gaps 0.4, 0.2, 0.5
  EXPECT_NEAR(c.gap_mean, 11.0 / 30.0, 1e-9);
  EXPECT_NEAR(c.gap_mean, c.iid_mean - c.ood_mean, 1e-9);
  EXPECT_NEAR(c.gap_std, std::sqrt(((0.4 - 11.0 / 30) * (0.4 - 11.0 / 30) + (0.2 - 11.0 / 30) * (0.2 - 11.0 / 30) +
                                    (0.5 - 11.0 / 30) * (0.5 - 11.0 / 30)) / 2.0),
              1e-12);
  const auto j = aggregates_to_json(cells);
  EXPECT_EQ(j.at(1).at("M"), 50);
}

TEST(RunContinual, MetricsCheckpointsAndSteps) {
  const Dataset& ds = testing::cached_dataset(5, 1);
  const Scenario sc = small_scenario(2);
  testing::TempDir dir;
  const RunConfig cfg = small_run(2, 50, 0);
  const RunOutcome out = run_continual(ds, sc, cfg, dir.path());
  ASSERT_EQ(out.metrics.records().size(), 4u);
  EXPECT_EQ(out.metrics.records()[3].experience, 1);
  EXPECT_EQ(out.metrics.records()[3].split, "ood_test");
  EXPECT_EQ(out.optimizer_steps, expected_steps(sc, cfg));
  ASSERT_EQ(out.checkpoints.size(), 2u);
  for (const auto& p : out.checkpoints) EXPECT_TRUE(std::filesystem::exists(p));
  EXPECT_EQ(out.final_checkpoint_hash.size(), 64u);
  EXPECT_EQ(out.buffer_dump.at("capacity"), 50);
  EXPECT_THROW(run_continual(ds, sc, small_run(5, 0, 0)), DomainError);
}

TEST(RunContinual, EvalEveryAlwaysIncludesLastExperience) {
  const Dataset& ds = testing::cached_dataset(5, 1);
  const Scenario sc = small_scenario(5);
  RunConfig cfg = small_run(5, 0, 0);
  cfg.eval_every = 2;
  const RunOutcome out = run_continual(ds, sc, cfg);
  std::vector<int> seen;
  for (const auto& r : out.metrics.records())
    if (r.split == "iid_test") seen.push_back(r.experience);
  EXPECT_EQ(seen, (std::vector<int>{1, 3, 4}));
  EXPECT_TRUE(out.buffer_dump.is_null());
}

TEST(RunContinual, DoublePrecisionRunsAreIdentical) {
  const Dataset& ds = testing::cached_dataset(5, 1);
  const Scenario sc = small_scenario(2);
  RunConfig cfg = small_run(2, 50, 3);
  cfg.precision = Precision::kFloat64;
  const RunOutcome a = run_continual(ds, sc, cfg);
  const RunOutcome b = run_continual(ds, sc, cfg);
  EXPECT_EQ(a.final_checkpoint_hash, b.final_checkpoint_hash);
  EXPECT_EQ(a.metrics.to_csv(), b.metrics.to_csv());
}

TEST(RunGrid, AggregatesSeedsAndRecordsFailures) {
  const Dataset& ds = testing::cached_dataset(5, 1);
  std::map<int, Scenario> scenarios = {{1, small_scenario(1)}};
  std::vector<RunConfig> configs;
  for (std::uint64_t s = 0; s < 3; ++s) configs.push_back(small_run(1, 0, s));
  int finished = 0;
  GridOptions opts;
  opts.on_finish = [&](const RunConfig&, const RunOutcome* o, const std::string&) { finished += o != nullptr; };
  const GridResult g = run_grid(ds, scenarios, configs, opts);
  EXPECT_EQ(g.executed, 3);
  EXPECT_EQ(finished, 3);
  ASSERT_EQ(g.aggregates.size(), 1u);
  EXPECT_EQ(g.aggregates[0].runs, 3);
  EXPECT_TRUE(g.failures.empty());

  // A scenario with an empty experience fails its run; the others still complete.
  Scenario broken = small_scenario(2);
  broken.experiences[1].train.clear();
  scenarios[2] = broken;
  configs = {small_run(2, 0, 0), small_run(1, 0, 0)};
  const GridResult g2 = run_grid(ds, scenarios, configs);
  ASSERT_EQ(g2.failures.size(), 1u);
  EXPECT_EQ(g2.failures[0].first, "T2_M0_s0");
  EXPECT_EQ(g2.aggregates.size(), 1u);
}

TEST(RunGrid, ResumeHookSkipsRuns) {
  const Dataset& ds = testing::cached_dataset(5, 1);
  const std::map<int, Scenario> scenarios = {{1, small_scenario(1)}};
  MetricsTable stored;
  stored.add({"T1_M0_s0", 1, 0, 0, 0, "iid_test", 0.5, 0, 0});
  stored.add({"T1_M0_s0", 1, 0, 0, 0, "ood_test", 0.25, 0, 0});
  GridOptions opts;
  opts.resume = [&](const RunConfig&) -> std::optional<MetricsTable> { return stored; };
  const GridResult g = run_grid(ds, scenarios, {small_run(1, 0, 0)}, opts);
  EXPECT_EQ(g.resumed, 1);
  EXPECT_EQ(g.executed, 0);
  EXPECT_EQ(g.metrics.to_csv(), stored.to_csv());
  EXPECT_THROW(run_grid(ds, scenarios, {small_run(2, 0, 0)}), DomainError);
}

}  // namespace
}  // namespace clood
