#include "clood/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "clood/checkpoint.hpp"
#include "clood/errors.hpp"
#include "clood/hash.hpp"
#include "clood/log.hpp"
#include "clood/png_export.hpp"
#include "clood/probe.hpp"
#include "clood/scenario.hpp"

namespace clood::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  if (fs::exists(dir, ec)) return;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  log::info("created " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_dir(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void append_line(const fs::path& path, const std::string& line) {
  ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << line << '\n';
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

fs::path registry_path(const fs::path& out) { return out / "runs" / "registry.jsonl"; }
fs::path run_dir(const fs::path& out, const std::string& id) { return out / "runs" / id; }
fs::path checkpoint_path(const fs::path& out, const std::string& id, int experience) {
  char name[32];
  std::snprintf(name, sizeof name, "exp_%02d.ckpt", experience);
  return run_dir(out, id) / "checkpoints" / name;
}

Dataset load_matching_dataset(const Options& opt) {
  const fs::path dir = opt.out / "dataset";
  if (!fs::exists(dir / "dataset.clood"))
    throw NotFoundError("dataset not found at " + dir.string() + "; run 'clood generate' first");
  Dataset ds = Dataset::load(dir);
  if (ds.seed() != opt.config.dataset.seed || ds.config().counts != opt.config.dataset.counts.counts)
    throw ConfigError("dataset at " + dir.string() + " was generated from a different [dataset] section " +
                      "(seed " + std::to_string(ds.seed()) + "); rerun 'clood generate'");
  return ds;
}

std::map<int, Scenario> build_scenarios(const Dataset& ds, const ExperimentConfig& config,
                                        const std::set<int>& tasks) {
  const HoldoutMap holdout = config.holdout();
  const DataSplit split = split_dataset(ds, holdout, config.scenario.train_fraction);
  std::map<int, Scenario> out;
  for (int t : tasks)
    out.emplace(t, build_experiences(ds, split, holdout, t, config.scenario.seed, config.scenario.permute));
  return out;
}

std::string scenario_hash(const Scenario& s) { return sha256_hex(s.to_json().dump()); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct MeanStd {
  double mean = 0.0, std = 0.0;
  int n = 0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  m.n = static_cast<int>(v.size());
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

std::string probe_spec_hash(const probe::ProbeSpec& s) {
  const json j = {{"tap", s.tap},       {"hidden", s.hidden},         {"lrs", s.learning_rates},
                  {"epochs", s.epochs}, {"momentum", s.momentum},     {"batch", s.batch_size},
                  {"linear", s.linear}, {"val", s.val_fraction},      {"seed", s.seed}};
  return sha256_hex(j.dump()).substr(0, 16);
}

json result_json(const probe::ProbeResult& r) {
  return {{"checkpoint", r.checkpoint},     {"tap", r.tap},
          {"task", probe::to_string(r.task)}, {"regime", probe::to_string(r.regime)},
          {"h", r.hidden},                   {"lr", r.lr},
          {"val_accuracy", r.val_accuracy},  {"iid_accuracy", r.iid_accuracy},
          {"ood_accuracy", r.ood_accuracy},  {"train_classes", r.train_classes},
          {"train_rows", r.train_rows}};
}

}  // namespace

fs::path resolve_output(const std::optional<std::string>& flag, const char* env, const ExperimentConfig& config) {
  if (flag && !flag->empty()) return *flag;
  if (env && *env) return env;
  return config.output_dir;
}

std::string run_fingerprint(const RunConfig& run, const std::string& dataset_hash, const std::string& scenario_hash) {
  return sha256_hex(json{{"run", run.to_json()}, {"dataset", dataset_hash}, {"scenario", scenario_hash}}.dump());
}

std::map<std::string, json> read_registry(const fs::path& out) {
  std::map<std::string, json> latest;
  std::ifstream in(registry_path(out));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      const std::string id = j.at("run_id").get<std::string>();
      latest[id] = std::move(j);
    } catch (const json::exception&) {
      // A line torn by a kill mid-write; the run will be redone.
      log::warn("skipping malformed registry line in " + registry_path(out).string());
    }
  }
  return latest;
}

json cmd_generate(const Options& opt) {
  const auto& dc = opt.config.dataset;
  const fs::path dir = opt.out / "dataset";
  if (opt.dry_run)
    return {{"command", "generate"}, {"dry_run", true}, {"path", dir.string()}, {"count", dc.counts.total()},
            {"seed", dc.seed}};
  ensure_dir(dir);
  const Dataset ds = render_dataset(dc.counts, dc.seed);
  ds.save(dir);
  write_contact_sheet(ds, dir / "samples.png");
  const json manifest = ds.manifest();
  log::info("generated " + std::to_string(ds.size()) + " images in " + dir.string());
  return {{"command", "generate"}, {"path", dir.string()}, {"count", ds.size()},
          {"seed", dc.seed},       {"content_hash", manifest["content_hash"]},
          {"config_hash", manifest["config_hash"]}};
}

json cmd_train(const Options& opt) {
  const auto configs = opt.config.run_configs();
  std::set<int> tasks(opt.config.scenario.tasks.begin(), opt.config.scenario.tasks.end());
  const auto registry = read_registry(opt.out);

  if (opt.dry_run) {
    json plan = json::array();
    for (const auto& rc : configs) {
      const auto it = registry.find(rc.id());
      const bool done = it != registry.end() && it->second.value("status", "") == "completed";
      plan.push_back({{"run_id", rc.id()}, {"action", done ? "resume-check" : "run"}});
    }
    return {{"command", "train"}, {"dry_run", true}, {"runs", plan}};
  }

  const Dataset ds = load_matching_dataset(opt);
  const std::string dataset_hash = ds.content_hash();
  const auto scenarios = build_scenarios(ds, opt.config, tasks);
  std::map<int, std::string> scen_hash;
  for (const auto& [t, s] : scenarios) scen_hash[t] = scenario_hash(s);
  auto fingerprint = [&](const RunConfig& rc) { return run_fingerprint(rc, dataset_hash, scen_hash.at(rc.num_tasks)); };

  GridOptions g;
  g.jobs = opt.jobs;
  g.checkpoint_dir = [&](const RunConfig& rc) { return run_dir(opt.out, rc.id()) / "checkpoints"; };
  g.resume = [&](const RunConfig& rc) -> std::optional<MetricsTable> {
    const auto it = registry.find(rc.id());
    if (it == registry.end() || it->second.value("status", "") != "completed") return std::nullopt;
    if (it->second.value("fingerprint", "") != fingerprint(rc)) {
      log::info("run " + rc.id() + " changed since it completed; rerunning");
      return std::nullopt;
    }
    const fs::path metrics = run_dir(opt.out, rc.id()) / "metrics.csv";
    if (!fs::exists(metrics)) return std::nullopt;
    log::info("run " + rc.id() + " already completed; skipping");
    return MetricsTable::from_csv(read_text(metrics));
  };
  g.on_finish = [&](const RunConfig& rc, const RunOutcome* outcome, const std::string& error) {
    json entry = {{"run_id", rc.id()}, {"fingerprint", fingerprint(rc)}};
    if (!outcome) {
      entry["status"] = "failed";
      entry["error"] = error;
      append_line(registry_path(opt.out), entry.dump());
      return;
    }
    const fs::path dir = run_dir(opt.out, rc.id());
    const json snapshot = {{"run", rc.to_json()},
                           {"experiment", opt.config.to_json()},
                           {"dataset_hash", dataset_hash},
                           {"scenario_hash", scen_hash.at(rc.num_tasks)}};
    write_text(dir / "config.json", snapshot.dump(2) + "\n");
    write_text(dir / "scenario.json", scenarios.at(rc.num_tasks).to_json().dump() + "\n");
    write_text(dir / "metrics.csv", outcome->metrics.to_csv());
    write_text(dir / "buffer.json", outcome->buffer_dump.dump(2) + "\n");
    entry["status"] = "completed";
    entry["optimizer_steps"] = outcome->optimizer_steps;
    entry["final_checkpoint_hash"] = outcome->final_checkpoint_hash;
    entry["wall_time"] = outcome->wall_time;
    append_line(registry_path(opt.out), entry.dump());
  };

  const GridResult result = run_grid(ds, scenarios, configs, g);
  write_text(opt.out / "results" / "grid.csv", result.metrics.to_csv());
  json failures = json::array();
  for (const auto& [id, msg] : result.failures) failures.push_back({{"run_id", id}, {"error", msg}});
  const json summary = {{"aggregates", aggregates_to_json(result.aggregates)},
                        {"runs", configs.size()},
                        {"failures", failures},
                        {"dataset_hash", dataset_hash}};
  write_text(opt.out / "results" / "summary.json", summary.dump(2) + "\n");
  json out = {{"command", "train"},          {"executed", result.executed}, {"resumed", result.resumed},
              {"failed", failures.size()},    {"grid_csv", (opt.out / "results" / "grid.csv").string()}};
  if (!result.failures.empty())
    throw RunFailure(std::to_string(result.failures.size()) + " of " + std::to_string(configs.size()) +
                     " runs failed; first: " + result.failures.front().first + ": " + result.failures.front().second);
  return out;
}

json cmd_probe(const Options& opt) {
  const auto& pc = opt.config.probe;
  const auto registry = read_registry(opt.out);
  std::vector<std::string> run_ids;
  if (pc.runs.empty()) {
    for (const auto& [id, e] : registry)
      if (e.value("status", "") == "completed") run_ids.push_back(id);
  } else {
    run_ids = pc.runs;
  }
  if (run_ids.empty()) throw NotFoundError("no completed runs under " + (opt.out / "runs").string() + " to probe");

  // Enumerate every missing artifact before doing any work.
  std::string missing;
  std::map<std::string, json> run_cfg;
  for (const auto& id : run_ids) {
    const fs::path cfg = run_dir(opt.out, id) / "config.json";
    if (!fs::exists(cfg)) {
      missing += "\n  " + cfg.string();
      continue;
    }
    run_cfg[id] = read_json(cfg);
    const int t = run_cfg[id]["run"]["T"].get<int>();
    const int first = pc.curves ? 0 : t - 1;
    for (int e = first; e < t; ++e)
      if (!fs::exists(checkpoint_path(opt.out, id, e))) missing += "\n  " + checkpoint_path(opt.out, id, e).string();
  }
  if (!missing.empty()) throw NotFoundError("missing checkpoints:" + missing);

  const fs::path pdir = opt.out / "probes";
  const std::string spec_hash = probe_spec_hash(pc.spec);
  json summary = fs::exists(pdir / "summary.json") ? read_json(pdir / "summary.json")
                                                   : json{{"battery", json::object()}, {"curves", json::object()}};

  std::vector<std::string> planned;
  for (const auto& id : run_ids) {
    for (auto task : pc.tasks)
      for (auto regime : pc.regimes) {
        const std::string key = id + "|" + pc.spec.tap + "|" + std::string(probe::to_string(task)) + "|" +
                                std::string(probe::to_string(regime));
        const auto& b = summary["battery"];
        if (!b.contains(key) || b[key].value("spec_hash", "") != spec_hash) planned.push_back(key);
      }
    if (pc.curves) {
      const std::string key = id + "|" + pc.spec.tap + "|char|iid_only";
      const auto& c = summary["curves"];
      if (!c.contains(key) || c[key].value("spec_hash", "") != spec_hash) planned.push_back("curve:" + key);
    }
  }
  if (opt.dry_run) return {{"command", "probe"}, {"dry_run", true}, {"planned", planned}};

  const Dataset ds = load_matching_dataset(opt);
  int computed = 0;
  for (const auto& id : run_ids) {
    const json& rc = run_cfg[id]["run"];
    const int t = rc["T"].get<int>();
    const Scenario scenario = Scenario::from_json(read_json(run_dir(opt.out, id) / "scenario.json"));
    const json meta = {{"run_id", id}, {"T", t}, {"M", rc["M"]}, {"seed", rc["seed"]}, {"spec_hash", spec_hash}};

    std::vector<probe::Task> tasks;
    std::vector<probe::Regime> regimes;
    for (auto task : pc.tasks)
      for (auto regime : pc.regimes) {
        const std::string key = id + "|" + pc.spec.tap + "|" + std::string(probe::to_string(task)) + "|" +
                                std::string(probe::to_string(regime));
        if (std::find(planned.begin(), planned.end(), key) == planned.end()) continue;
        const fs::path ck = checkpoint_path(opt.out, id, t - 1);
        const auto loaded = nn::load_checkpoint<float>(ck);
        const EvalResult clf_ood = evaluate(loaded.net, ds, scenario.ood_test);
        const EvalResult clf_iid = evaluate(loaded.net, ds, scenario.iid_test);
        const std::array<probe::Task, 1> ts{task};
        const std::array<probe::Regime, 1> rs{regime};
        const std::string name = id + "/" + ck.filename().string();
        auto results = probe::probe_battery(loaded.net, ds, scenario, ts, rs, pc.spec, name);
        json entry = result_json(results.front());
        entry.update(meta);
        entry["classifier_iid_accuracy"] = clf_iid.accuracy;
        entry["classifier_ood_accuracy"] = clf_ood.accuracy;
        summary["battery"][key] = entry;
        ++computed;
      }

    if (pc.curves) {
      const std::string key = id + "|" + pc.spec.tap + "|char|iid_only";
      if (std::find(planned.begin(), planned.end(), "curve:" + key) == planned.end()) continue;
      std::vector<fs::path> cks;
      for (int e = 0; e < t; ++e) cks.push_back(checkpoint_path(opt.out, id, e));
      probe::ProbeSpec spec = pc.spec;
      spec.task = probe::Task::kChar;
      spec.regime = probe::Regime::kIidOnly;
      const auto curve = probe::probe_over_experiences(cks, ds, scenario, spec);
      json points = json::array();
      for (std::size_t e = 0; e < curve.size(); ++e) {
        json p = result_json(curve[e]);
        p["checkpoint"] = id + "/" + curve[e].checkpoint;
        p["experience"] = e;
        points.push_back(p);
      }
      json entry = meta;
      entry["points"] = points;
      summary["curves"][key] = entry;
      ++computed;
      log::info("char probe curve for " + id + " done");
    }
    // Persist after every run so an interrupted battery keeps its progress.
    write_text(pdir / "summary.json", summary.dump(2) + "\n");
  }

  // CSVs are regenerated from the keyed summary, so reruns never duplicate rows.
  std::string csv = std::string(probe::kCsvHeader) + "\n";
  for (const auto& [key, e] : summary["battery"].items()) {
    for (const char* split : {"iid_test", "ood_test"}) {
      csv += e["checkpoint"].get<std::string>() + "," + e["tap"].get<std::string>() + "," +
             e["task"].get<std::string>() + "," + e["regime"].get<std::string>() + "," +
             std::to_string(e["h"].get<int>()) + "," + fmt(e["lr"].get<double>()) + "," + split + "," +
             fmt(e[std::string(split == std::string("iid_test") ? "iid_accuracy" : "ood_accuracy")].get<double>()) +
             "\n";
    }
  }
  std::string curves = "run_id,T,M,seed,experience,checkpoint,tap,task,regime,h,lr,split,accuracy\n";
  for (const auto& [key, e] : summary["curves"].items()) {
    for (const auto& p : e["points"]) {
      for (const char* split : {"iid_test", "ood_test"}) {
        curves += e["run_id"].get<std::string>() + "," + std::to_string(e["T"].get<int>()) + "," +
                  std::to_string(e["M"].get<int>()) + "," + std::to_string(e["seed"].get<std::uint64_t>()) + "," +
                  std::to_string(p["experience"].get<int>()) + "," + p["checkpoint"].get<std::string>() + "," +
                  p["tap"].get<std::string>() + "," + p["task"].get<std::string>() + "," +
                  p["regime"].get<std::string>() + "," + std::to_string(p["h"].get<int>()) + "," +
                  fmt(p["lr"].get<double>()) + "," + split + "," +
                  fmt(p[std::string(split == std::string("iid_test") ? "iid_accuracy" : "ood_accuracy")].get<double>()) +
                  "\n";
      }
    }
  }
  write_text(pdir / "summary.json", summary.dump(2) + "\n");
  write_text(pdir / "probes.csv", csv);
  write_text(pdir / "curves.csv", curves);
  return {{"command", "probe"},
          {"computed", computed},
          {"skipped", static_cast<int>(run_ids.size() * pc.tasks.size() * pc.regimes.size() + (pc.curves ? run_ids.size() : 0)) - computed},
          {"probes_csv", (pdir / "probes.csv").string()}};
}

json cmd_report(const Options& opt) {
  const fs::path grid_csv = opt.out / "results" / "grid.csv";
  const fs::path probe_summary = opt.out / "probes" / "summary.json";
  if (!fs::exists(grid_csv))
    throw NotFoundError("no results CSV found: expected " + grid_csv.string() + " (run 'clood train' first)");
  const std::string grid_text = read_text(grid_csv);
  const MetricsTable table = MetricsTable::from_csv(grid_text);
  if (table.empty()) throw NotFoundError("results CSV " + grid_csv.string() + " has no rows");
  const fs::path rdir = opt.out / "report";
  if (opt.dry_run)
    return {{"command", "report"}, {"dry_run", true}, {"inputs", {grid_csv.string()}}, {"out", rdir.string()}};

  const auto cells = aggregate(table);
  std::string gap = "T,M,runs,iid_mean,iid_std,ood_mean,ood_std,gap_mean,gap_std\n";
  for (const auto& c : cells)
    gap += std::to_string(c.num_tasks) + "," + std::to_string(c.memory_size) + "," + std::to_string(c.runs) + "," +
           fmt(c.iid_mean) + "," + fmt(c.iid_std) + "," + fmt(c.ood_mean) + "," + fmt(c.ood_std) + "," +
           fmt(c.gap_mean) + "," + fmt(c.gap_std) + "\n";

  std::string curves = "run_id,T,M,seed,experience,source,split,accuracy\n";
  for (const auto& r : table.records())
    curves += r.run_id + "," + std::to_string(r.num_tasks) + "," + std::to_string(r.memory_size) + "," +
              std::to_string(r.seed) + "," + std::to_string(r.experience) + ",classifier," + r.split + "," +
              fmt(r.accuracy) + "\n";

  std::string probes = "T,M,tap,task,regime,split,runs,mean,std\n";
  json inputs = {{"grid_csv", {{"path", grid_csv.string()}, {"sha256", sha256_hex(grid_text)}}}};
  if (fs::exists(probe_summary)) {
    const std::string text = read_text(probe_summary);
    inputs["probe_summary"] = {{"path", probe_summary.string()}, {"sha256", sha256_hex(text)}};
    const json s = json::parse(text);
    using Key = std::tuple<int, int, std::string, std::string, std::string, std::string>;
    std::map<Key, std::vector<double>> groups;
    for (const auto& [k, e] : s["battery"].items())
      for (const char* split : {"iid_test", "ood_test"})
        groups[{e["T"].get<int>(), e["M"].get<int>(), e["tap"].get<std::string>(), e["task"].get<std::string>(),
                e["regime"].get<std::string>(), split}]
            .push_back(e[std::string(split) == "iid_test" ? "iid_accuracy" : "ood_accuracy"].get<double>());
    for (const auto& [k, v] : groups) {
      const MeanStd m = mean_std(v);
      const auto& [t, mm, tap, task, regime, split] = k;
      probes += std::to_string(t) + "," + std::to_string(mm) + "," + tap + "," + task + "," + regime + "," + split +
                "," + std::to_string(m.n) + "," + fmt(m.mean) + "," + fmt(m.std) + "\n";
    }
    for (const auto& [k, e] : s["curves"].items())
      for (const auto& p : e["points"])
        for (const char* split : {"iid_test", "ood_test"})
          curves += e["run_id"].get<std::string>() + "," + std::to_string(e["T"].get<int>()) + "," +
                    std::to_string(e["M"].get<int>()) + "," + std::to_string(e["seed"].get<std::uint64_t>()) + "," +
                    std::to_string(p["experience"].get<int>()) + ",probe_" + p["task"].get<std::string>() + "," +
                    split + "," +
                    fmt(p[std::string(split) == "iid_test" ? "iid_accuracy" : "ood_accuracy"].get<double>()) + "\n";
  }

  write_text(rdir / "gap_vs_memory.csv", gap);
  write_text(rdir / "experience_curves.csv", curves);
  write_text(rdir / "probe_summary.csv", probes);
  const json report = {{"inputs", inputs},
                       {"cells", aggregates_to_json(cells)},
                       {"outputs", {"gap_vs_memory.csv", "probe_summary.csv", "experience_curves.csv"}}};
  write_text(rdir / "report.json", report.dump(2) + "\n");
  return {{"command", "report"}, {"cells", cells.size()}, {"out", rdir.string()}};
}

}  // namespace clood::pipeline
