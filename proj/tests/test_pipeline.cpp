#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "clood/errors.hpp"
#include "clood/pipeline.hpp"
#include "test_util.hpp"

namespace clood::pipeline {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.dataset.counts = DatasetConfig::uniform(4);
  c.scenario.tasks = {2};
  c.training.memory = {0, 50};
  c.training.seeds = {0};
  c.training.epochs = 1;
  c.probe.tasks = {probe::Task::kChar, probe::Task::kFontChar};
  c.probe.regimes = {probe::Regime::kIidOnly};
  c.probe.spec.hidden = {16};
  c.probe.spec.learning_rates = {0.1};
  c.probe.spec.epochs = 3;
  return c;
}

TEST(ResolveOutput, FlagThenEnvThenConfig) {
  ExperimentConfig c;
  c.output_dir = "from_config";
  EXPECT_EQ(resolve_output(std::string("flag"), "env", c), fs::path("flag"));
  EXPECT_EQ(resolve_output(std::nullopt, "env", c), fs::path("env"));
  EXPECT_EQ(resolve_output(std::nullopt, nullptr, c), fs::path("from_config"));
  EXPECT_EQ(resolve_output(std::nullopt, "", c), fs::path("from_config"));
}

TEST(Fingerprint, ChangesWithAnyInput) {
  RunConfig rc;
  const std::string base = run_fingerprint(rc, "d", "s");
  EXPECT_EQ(base, run_fingerprint(rc, "d", "s"));
  EXPECT_NE(base, run_fingerprint(rc, "d2", "s"));
  EXPECT_NE(base, run_fingerprint(rc, "d", "s2"));
  rc.epochs = 3;
  EXPECT_NE(base, run_fingerprint(rc, "d", "s"));
}

TEST(Pipeline, MissingInputsAreReported) {
  testing::TempDir dir;
  Options opt{tiny_config(), dir.path()};
  EXPECT_THROW(cmd_report(opt), NotFoundError);
  EXPECT_THROW(cmd_train(opt), NotFoundError);
  EXPECT_THROW(cmd_probe(opt), NotFoundError);
}

TEST(Pipeline, DryRunWritesNothing) {
  testing::TempDir dir;
  Options opt{tiny_config(), dir.path() / "out", 1, true};
  const auto g = cmd_generate(opt);
  EXPECT_EQ(g.at("count"), 400);
  const auto t = cmd_train(opt);
  EXPECT_EQ(t.at("runs").size(), 2u);
  EXPECT_FALSE(fs::exists(dir.path() / "out" / "dataset"));
  EXPECT_FALSE(fs::exists(dir.path() / "out" / "runs"));
}

TEST(Pipeline, EndToEndWithResume) {
  testing::TempDir dir;
  Options opt{tiny_config(), dir.path() / "out"};
  const fs::path out = opt.out;

  cmd_generate(opt);
  for (const char* f : {"dataset.clood", "dataset.json", "samples.png"}) EXPECT_TRUE(fs::exists(out / "dataset" / f)) << f;

  const auto t1 = cmd_train(opt);
  EXPECT_EQ(t1.at("executed"), 2);
  EXPECT_EQ(t1.at("resumed"), 0);
  const auto registry = read_registry(out);
  ASSERT_EQ(registry.size(), 2u);
  for (const auto& [id, e] : registry) {
    EXPECT_EQ(e.at("status"), "completed") << id;
    EXPECT_GT(e.at("optimizer_steps").get<int>(), 0);
    for (const char* f : {"config.json", "scenario.json", "metrics.csv", "buffer.json", "checkpoints/exp_01.ckpt"})
      EXPECT_TRUE(fs::exists(out / "runs" / id / f)) << id << "/" << f;
  }
  const std::string grid = slurp(out / "results" / "grid.csv");

  const auto t2 = cmd_train(opt);
  EXPECT_EQ(t2.at("executed"), 0);
  EXPECT_EQ(t2.at("resumed"), 2);
  EXPECT_EQ(slurp(out / "results" / "grid.csv"), grid);

  // Changing the run configuration invalidates the registry entries.
  Options changed = opt;
  changed.config.training.memory = {0};
  changed.config.training.batch_size = 32;
  EXPECT_EQ(cmd_train(changed).at("executed"), 1);
  // Going back reruns the overwritten cell only.
  EXPECT_EQ(cmd_train(opt).at("executed"), 1);
  EXPECT_EQ(cmd_train(opt).at("executed"), 0);

  const auto p1 = cmd_probe(opt);
  EXPECT_EQ(p1.at("computed"), 2 * 2 + 2);
  const std::string probes = slurp(out / "probes" / "probes.csv");
  EXPECT_EQ(std::count(probes.begin(), probes.end(), '\n'), 1 + 2 * 2 * 2);
  const auto p2 = cmd_probe(opt);
  EXPECT_EQ(p2.at("computed"), 0);
  EXPECT_EQ(slurp(out / "probes" / "probes.csv"), probes);
  const std::string curves = slurp(out / "probes" / "curves.csv");
  // 2 runs x 2 experiences x 2 splits, plus header.
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 9);

  cmd_report(opt);
  std::map<std::string, std::string> first;
  for (const char* f : {"gap_vs_memory.csv", "experience_curves.csv", "probe_summary.csv", "report.json"}) {
    ASSERT_TRUE(fs::exists(out / "report" / f)) << f;
    first[f] = slurp(out / "report" / f);
  }
  EXPECT_EQ(first["gap_vs_memory.csv"].substr(0, first["gap_vs_memory.csv"].find('\n')),
            "T,M,runs,iid_mean,iid_std,ood_mean,ood_std,gap_mean,gap_std");
  cmd_report(opt);
  for (const auto& [f, text] : first) EXPECT_EQ(slurp(out / "report" / f), text) << f;
}

TEST(Pipeline, DatasetMismatchIsAConfigError) {
  testing::TempDir dir;
  Options opt{tiny_config(), dir.path()};
  cmd_generate(opt);
  Options other = opt;
  other.config.dataset.seed = 99;
  EXPECT_THROW(cmd_train(other), ConfigError);
}

TEST(Pipeline, ProbeListsMissingCheckpoints) {
  testing::TempDir dir;
  Options opt{tiny_config(), dir.path()};
  opt.config.training.memory = {0};
  cmd_generate(opt);
  cmd_train(opt);
  fs::remove(dir.path() / "runs" / "T2_M0_s0" / "checkpoints" / "exp_00.ckpt");
  fs::remove(dir.path() / "runs" / "T2_M0_s0" / "checkpoints" / "exp_01.ckpt");
  try {
    cmd_probe(opt);
    FAIL() << "expected NotFoundError";
  } catch (const NotFoundError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("exp_00.ckpt"), std::string::npos);
    EXPECT_NE(msg.find("exp_01.ckpt"), std::string::npos);
  }
}

TEST(Registry, SkipsMalformedLinesAndKeepsLatest) {
  testing::TempDir dir;
  fs::create_directories(dir.path() / "runs");
  std::ofstream(dir.path() / "runs" / "registry.jsonl")
      << R"({"run_id":"a","status":"failed"})" << "\n"
      << "not json\n"
      << R"({"run_id":"a","status":"completed"})" << "\n"
      << R"({"status":"completed"})" << "\n";
  const auto r = read_registry(dir.path());
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r.at("a").at("status"), "completed");
}

}  // namespace
}  // namespace clood::pipeline
