// clood command-line driver. Links only the C API.
#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "clood/clood.h"
#include "json.hpp"

namespace {

constexpr int kUsageExit = 64;

int report_error(const std::string& status, const std::string& message, int code) {
  const nlohmann::json err = {{"error", {{"status", status}, {"message", message}}}};
  std::fprintf(stderr, "%s\n", err.dump().c_str());
  return code;
}

int report_status(clood_status s) { return report_error(clood_status_name(s), clood_last_error(), static_cast<int>(s)); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clood: continual-learning OOD generalization experiments on synthetic glyphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", clood_version());

  std::string config_path;
  std::string out_dir;
  int jobs = 1;
  std::uint64_t seed = 0;
  bool dry_run = false;
  int log_level = 1;

  app.add_option("--config", config_path, "Experiment config (key/section text, or .json)")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output root (overrides CLOOD_OUT and output.dir)");
  app.add_option("--jobs", jobs, "Parallel runs for train")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "Replace the training seed list with this seed");
  app.add_flag("--dry-run", dry_run, "Print the plan without running anything");
  app.add_option("--log-level", log_level, "0 debug, 1 info, 2 warn, 3 error, 4 off")->check(CLI::Range(0, 4));

  // Global flags may appear before or after the subcommand.
  app.fallthrough();
  app.add_subcommand("generate", "Render the glyph dataset");
  app.add_subcommand("train", "Run the T x M x seed training grid (resumable)");
  app.add_subcommand("probe", "Probe batteries and per-experience char curves on completed runs");
  auto* report = app.add_subcommand("report", "Aggregate results into figure-ready CSVs");
  std::string results_dir;
  report->add_option("results_dir", results_dir, "Output root holding results/ (defaults to the resolved --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage_error", e.what(), kUsageExit);
  }

  clood_set_log_level(log_level);

  clood_config* cfg = nullptr;
  clood_status s = config_path.empty() ? clood_config_default(&cfg) : clood_config_load(config_path.c_str(), &cfg);
  if (s != CLOOD_OK) return report_status(s);
  if (seed_opt->count() > 0) clood_config_set_seed(cfg, seed);

  const std::string command = app.get_subcommands().front()->get_name();
  if (command == "report" && !results_dir.empty()) out_dir = results_dir;

  clood_run_options opts{};
  opts.out_flag = out_dir.empty() ? nullptr : out_dir.c_str();
  opts.out_env = std::getenv("CLOOD_OUT");
  opts.jobs = jobs;
  opts.dry_run = dry_run ? 1 : 0;

  char* result = nullptr;
  s = clood_run_command(command.c_str(), cfg, &opts, &result);
  clood_config_free(cfg);
  if (result) {
    std::printf("%s\n", result);
    clood_string_free(result);
  }
  if (s != CLOOD_OK) return report_status(s);
  return 0;
}
