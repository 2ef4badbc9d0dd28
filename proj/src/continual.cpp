#include "clood/continual.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "clood/batch.hpp"
#include "clood/checkpoint.hpp"
#include "clood/errors.hpp"
#include "clood/hash.hpp"
#include "clood/log.hpp"

namespace clood {

std::string RunConfig::id() const {
  if (!run_id.empty()) return run_id;
  return "T" + std::to_string(num_tasks) + "_M" + std::to_string(memory_size) + "_s" +
         std::to_string(seed);
}

void RunConfig::validate() const {
  if (!valid_num_tasks(num_tasks)) {
    throw DomainError("T must be one of {1,2,4,5,10}, got " + std::to_string(num_tasks));
  }
  if (!valid_memory_size(memory_size)) {
    throw DomainError("M must be one of {0,50,100,250,500,1000}, got " + std::to_string(memory_size));
  }
  if (epochs < 1) throw DomainError("epochs must be >= 1");
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (eval_every < 1) throw DomainError("eval_every must be >= 1");
}

nlohmann::json RunConfig::to_json() const {
  return {{"run_id", id()},
          {"T", num_tasks},
          {"M", memory_size},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"eval_every", eval_every},
          {"precision", precision == Precision::kFloat32 ? "float32" : "float64"},
          {"adam", {{"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}}};
}

void MetricsTable::append(const MetricsTable& other) {
  records_.insert(records_.end(), other.records_.begin(), other.records_.end());
}

std::string MetricsTable::to_csv(bool header) const {
  std::string out;
  if (header) {
    out += kCsvHeader;
    out += '\n';
  }
  char buf[512];
  for (const auto& r : records_) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%llu,%d,%s,%.17g,%.17g\n", r.run_id.c_str(), r.num_tasks,
                  r.memory_size, static_cast<unsigned long long>(r.seed), r.experience, r.split.c_str(),
                  r.accuracy, r.loss);
    out += buf;
  }
  return out;
}

MetricsTable MetricsTable::from_csv(std::string_view text) {
  MetricsTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line == kCsvHeader) continue;
      throw IoError("metrics CSV header mismatch: " + line);
    }
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (cols.size() != 8) throw IoError("metrics CSV row has " + std::to_string(cols.size()) + " columns");
    MetricRecord r;
    try {
      r.run_id = cols[0];
      r.num_tasks = std::stoi(cols[1]);
      r.memory_size = std::stoi(cols[2]);
      r.seed = std::stoull(cols[3]);
      r.experience = std::stoi(cols[4]);
      r.split = cols[5];
      r.accuracy = std::stod(cols[6]);
      r.loss = std::stod(cols[7]);
    } catch (const std::exception&) {
      throw IoError("malformed metrics CSV row: " + line);
    }
    t.add(std::move(r));
  }
  return t;
}

template <typename T>
double accuracy_from_logits(const nn::Tensor<T>& logits, std::span<const int> labels) {
  const auto pred = nn::argmax_rows(logits);
  if (pred.size() != labels.size()) throw DomainError("logit rows and labels differ in count");
  if (pred.empty()) throw DomainError("accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

template <typename T>
EvalResult evaluate(const nn::Network<T>& net, const Dataset& dataset, std::span<const std::size_t> split,
                    int batch_size) {
  if (split.empty()) throw DomainError("cannot evaluate on an empty split");
  std::size_t hit = 0;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    const auto chunk = split.subspan(start, std::min<std::size_t>(batch_size, split.size() - start));
    const auto batch = gather_images<T>(dataset, chunk);
    const auto labels = gather_labels(dataset, chunk);
    const auto fwd = net.forward(batch);
    const auto pred = nn::argmax_rows(fwd.logits);
    for (std::size_t i = 0; i < chunk.size(); ++i) hit += pred[i] == labels[i];
    loss_sum += static_cast<double>(nn::softmax_xent(fwd.logits, labels).loss) * chunk.size();
  }
  return {static_cast<double>(hit) / split.size(), loss_sum / split.size(), split.size()};
}

template <typename T>
std::int64_t train_experience(nn::Network<T>& net, nn::AdamState<T>& opt, ReservoirBuffer* buffer,
                              const Dataset& dataset, const Experience& experience,
                              const RunConfig& config, Rng& shuffle_rng, Rng& memory_rng) {
  if (experience.train.empty()) throw DomainError("cannot train on an empty experience");
  std::vector<std::size_t> order = experience.train;
  const std::span<const std::size_t> all(order);
  const auto B = static_cast<std::size_t>(config.batch_size);
  std::int64_t steps = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += B) {
      const auto chunk = all.subspan(start, std::min(B, order.size() - start));
      er_step(net, opt, dataset, chunk, buffer, epoch == 0, B, memory_rng);
      ++steps;
    }
  }
  return steps;
}

std::int64_t expected_steps(const Scenario& scenario, const RunConfig& config) {
  std::int64_t steps = 0;
  for (const auto& e : scenario.experiences) {
    const auto n = static_cast<std::int64_t>(e.train.size());
    steps += config.epochs * ((n + config.batch_size - 1) / config.batch_size);
  }
  return steps;
}

namespace {

template <typename T>
RunOutcome run_typed(const Dataset& dataset, const Scenario& scenario, const RunConfig& config,
                     const std::filesystem::path& checkpoint_dir) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const std::string run_id = config.id();

  nn::Network<T> net;
  nn::init_params(net, derive_seed(config.seed, tag("init")));
  auto opt = nn::AdamState<T>::for_params(net.params(), config.adam);
  std::optional<ReservoirBuffer> buffer;
  if (config.memory_size > 0) buffer.emplace(config.memory_size, derive_seed(config.seed, tag("replay")));
  Rng shuffle_rng(derive_seed(config.seed, tag("shuffle")));
  Rng memory_rng(derive_seed(config.seed, tag("memory")));

  RunOutcome out;
  const int T_count = static_cast<int>(scenario.experiences.size());
  for (int t = 0; t < T_count; ++t) {
    out.optimizer_steps += train_experience(net, opt, buffer ? &*buffer : nullptr, dataset,
                                            scenario.experiences[t], config, shuffle_rng, memory_rng);
    const nlohmann::json extra = {{"run_id", run_id},
                                  {"experience", t},
                                  {"T", config.num_tasks},
                                  {"M", config.memory_size},
                                  {"dataset_hash", scenario.dataset_hash}};
    if (!checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "exp_%02d.ckpt", t);
      const auto path = checkpoint_dir / name;
      nn::save_checkpoint(path, net, opt.step, config.seed, extra);
      out.checkpoints.push_back(path);
    }
    if ((t + 1) % config.eval_every == 0 || t + 1 == T_count) {
      for (const char* split : {"iid_test", "ood_test"}) {
        const auto& idx = std::string_view(split) == "iid_test" ? scenario.iid_test : scenario.ood_test;
        const EvalResult ev = evaluate(net, dataset, idx);
        const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
        out.metrics.add({run_id, config.num_tasks, config.memory_size, config.seed, t, split, ev.accuracy,
                         ev.loss, wall});
      }
      const auto& rec = out.metrics.records();
      char msg[256];
      std::snprintf(msg, sizeof(msg), "%s exp %d/%d  iid %.4f  ood %.4f  (%.1fs)", run_id.c_str(), t + 1,
                    T_count, rec[rec.size() - 2].accuracy, rec.back().accuracy, rec.back().wall_time);
      log::info(msg);
    }
    if (t + 1 == T_count) {
      out.final_checkpoint_hash = sha256_hex(nn::serialize_checkpoint(net, opt.step, config.seed, extra));
    }
  }
  if (buffer) out.buffer_dump = buffer->dump();
  out.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

RunOutcome run_continual(const Dataset& dataset, const Scenario& scenario, const RunConfig& config,
                         const std::filesystem::path& checkpoint_dir) {
  config.validate();
  if (scenario.num_tasks != config.num_tasks) {
    throw DomainError("scenario has T=" + std::to_string(scenario.num_tasks) + " but run asks for T=" +
                      std::to_string(config.num_tasks));
  }
  if (config.precision == Precision::kFloat64) {
    return run_typed<double>(dataset, scenario, config, checkpoint_dir);
  }
  return run_typed<float>(dataset, scenario, config, checkpoint_dir);
}

std::vector<CellAggregate> aggregate(const MetricsTable& table) {
  // (T, M) -> run id -> (final experience, iid, ood)
  struct Final {
    int experience = -1;
    double iid = std::nan("");
    double ood = std::nan("");
  };
  std::map<std::pair<int, int>, std::map<std::string, Final>> cells;
  for (const auto& r : table.records()) {
    Final& f = cells[{r.num_tasks, r.memory_size}][r.run_id];
    if (r.experience > f.experience) f = Final{r.experience};
    if (r.experience == f.experience) (r.split == "iid_test" ? f.iid : f.ood) = r.accuracy;
  }
  std::vector<CellAggregate> out;
  for (const auto& [key, runs] : cells) {
    std::vector<double> iid, ood, gap;
    for (const auto& [id, f] : runs) {
      if (std::isnan(f.iid) || std::isnan(f.ood)) continue;
      iid.push_back(f.iid);
      ood.push_back(f.ood);
      gap.push_back(f.iid - f.ood);
    }
    if (iid.empty()) continue;
    out.push_back({key.first, key.second, static_cast<int>(iid.size()), mean_of(iid), sample_std(iid),
                   mean_of(ood), sample_std(ood), mean_of(gap), sample_std(gap)});
  }
  return out;
}

nlohmann::json aggregates_to_json(const std::vector<CellAggregate>& cells) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cells) {
    arr.push_back({{"T", c.num_tasks},
                   {"M", c.memory_size},
                   {"runs", c.runs},
                   {"iid_mean", c.iid_mean},
                   {"iid_std", c.iid_std},
                   {"ood_mean", c.ood_mean},
                   {"ood_std", c.ood_std},
                   {"gap_mean", c.gap_mean},
                   {"gap_std", c.gap_std}});
  }
  return arr;
}

GridResult run_grid(const Dataset& dataset, const std::map<int, Scenario>& scenarios,
                    const std::vector<RunConfig>& configs, const GridOptions& options) {
  for (const auto& c : configs) {
    c.validate();
    if (!scenarios.contains(c.num_tasks)) {
      throw DomainError("no scenario built for T=" + std::to_string(c.num_tasks));
    }
  }
  std::vector<std::optional<MetricsTable>> results(configs.size());
  std::vector<std::string> errors(configs.size());
  std::vector<bool> resumed(configs.size(), false);
  std::mutex writer;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      const RunConfig& cfg = configs[i];
      if (options.resume) {
        if (auto prev = options.resume(cfg)) {
          results[i] = std::move(*prev);
          resumed[i] = true;
          continue;
        }
      }
      try {
        const auto dir = options.checkpoint_dir ? options.checkpoint_dir(cfg) : std::filesystem::path{};
        RunOutcome outcome = run_continual(dataset, scenarios.at(cfg.num_tasks), cfg, dir);
        std::lock_guard lock(writer);
        if (options.on_finish) options.on_finish(cfg, &outcome, {});
        results[i] = std::move(outcome.metrics);
      } catch (const std::exception& e) {
        std::lock_guard lock(writer);
        errors[i] = e.what();
        log::error("run " + cfg.id() + " failed: " + e.what());
        if (options.on_finish) {
          try {
            options.on_finish(cfg, nullptr, errors[i]);
          } catch (const std::exception&) {
          }
        }
      }
    }
  };

  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(configs.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  GridResult g;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (results[i]) {
      g.metrics.append(*results[i]);
      (resumed[i] ? g.resumed : g.executed) += 1;
    } else {
      g.failures.emplace_back(configs[i].id(), errors[i]);
    }
  }
  g.aggregates = aggregate(g.metrics);
  return g;
}

template EvalResult evaluate<float>(const nn::Network<float>&, const Dataset&, std::span<const std::size_t>, int);
template EvalResult evaluate<double>(const nn::Network<double>&, const Dataset&, std::span<const std::size_t>, int);
template double accuracy_from_logits<float>(const nn::Tensor<float>&, std::span<const int>);
template double accuracy_from_logits<double>(const nn::Tensor<double>&, std::span<const int>);
template std::int64_t train_experience<float>(nn::Network<float>&, nn::AdamState<float>&, ReservoirBuffer*,
                                              const Dataset&, const Experience&, const RunConfig&, Rng&, Rng&);
template std::int64_t train_experience<double>(nn::Network<double>&, nn::AdamState<double>&, ReservoirBuffer*,
                                               const Dataset&, const Experience&, const RunConfig&, Rng&, Rng&);

}  // namespace clood
