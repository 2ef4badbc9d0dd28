#include "clood/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "clood/errors.hpp"
#include "clood/replay.hpp"
#include "clood/scenario.hpp"

namespace clood {

using nlohmann::json;

namespace {

class TextParser {
 public:
  TextParser(std::string_view text, int line) : s_(text), line_(line) {}

  json value() {
    skip_ws();
    if (eof()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') return array();
    if (s_.substr(pos_, 4) == "true") return advance(4), json(true);
    if (s_.substr(pos_, 5) == "false") return advance(5), json(false);
    return number();
  }

  void finish() {
    skip_ws();
    if (!eof()) fail("unexpected trailing text '" + std::string(s_.substr(pos_)) + "'");
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("line " + std::to_string(line_) + ": " + msg);
  }
  bool eof() const { return pos_ >= s_.size(); }
  void advance(std::size_t n) { pos_ += n; }
  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  json string() {
    ++pos_;
    std::string out;
    while (!eof() && s_[pos_] != '"') {
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
        const char e = s_[++pos_];
        out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
      } else {
        out += s_[pos_];
      }
      ++pos_;
    }
    if (eof()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json array() {
    ++pos_;
    json out = json::array();
    skip_ws();
    if (!eof() && s_[pos_] == ']') return ++pos_, out;
    while (true) {
      out.push_back(value());
      skip_ws();
      if (eof()) fail("unterminated array");
      if (s_[pos_] == ']') return ++pos_, out;
      if (s_[pos_] != ',') fail("expected ',' or ']' in array");
      ++pos_;
      skip_ws();
      if (!eof() && s_[pos_] == ']') return ++pos_, out;  // trailing comma
    }
  }

  json number() {
    std::size_t end = pos_;
    while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '.' ||
                               s_[end] == '-' || s_[end] == '+' || s_[end] == '_'))
      ++end;
    std::string tok;
    for (char c : s_.substr(pos_, end - pos_))
      if (c != '_') tok += c;
    if (tok.empty()) fail("cannot parse value");
    pos_ = end;
    const bool is_float = tok.find_first_of(".eE") != std::string::npos;
    if (!is_float) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec == std::errc() && p == tok.data() + tok.size()) return v;
      fail("bad value '" + tok + "' (strings need quotes)");
    }
    double v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) fail("bad number '" + tok + "'");
    return v;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Drops a # comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && quoted) {
      ++i;
    } else if (s[i] == '"') {
      quoted = !quoted;
    } else if (s[i] == '#' && !quoted) {
      return s.substr(0, i);
    }
  }
  return s;
}

bool bracket_balance_open(std::string_view s) {
  int depth = 0;
  bool quoted = false;
  for (char c : s) {
    if (c == '"') quoted = !quoted;
    if (quoted) continue;
    depth += c == '[';
    depth -= c == ']';
  }
  return depth > 0;
}

// Reads a section object, rejecting keys outside the allowed set.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    obj_ = &root.at(name);
    if (!obj_->is_object()) throw ConfigError("[" + name + "] must be a table");
  }

  void allow(std::initializer_list<const char*> keys) {
    if (!obj_) return;
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : obj_->items())
      if (!ok.count(k)) {
        std::string list;
        for (const auto& a : ok) list += (list.empty() ? "" : ", ") + a;
        throw ConfigError("unknown key '" + name_ + "." + k + "' (allowed: " + list + ")");
      }
  }

  bool has(const char* key) const { return obj_ && obj_->contains(key); }

  template <typename T>
  void read(const char* key, T& out) const {
    if (!has(key)) return;
    try {
      out = obj_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("bad type for '" + name_ + "." + key + "': " + obj_->at(key).dump());
    }
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!obj_->at(key).is_number_integer()) throw ConfigError("'" + name_ + "." + key + "' must be an integer");
    }
  }

  const json& at(const char* key) const { return obj_->at(key); }
  std::string path(const char* key) const { return name_ + "." + key; }

 private:
  std::string name_;
  const json* obj_ = nullptr;
};

template <typename T>
void require_nonempty(const std::vector<T>& v, const std::string& key) {
  if (v.empty()) throw ConfigError("'" + key + "' must not be empty");
}

}  // namespace

json parse_config_text(std::string_view text) {
  json root = json::object();
  json* section = &root;
  std::string section_name;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line(trim(strip_comment(raw)));
    const int start_line = line_no;
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
      section_name = std::string(trim(std::string_view(line).substr(1, line.size() - 2)));
      if (section_name.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      if (root.contains(section_name))
        throw ConfigError("line " + std::to_string(line_no) + ": duplicate section [" + section_name + "]");
      root[section_name] = json::object();
      section = &root[section_name];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(trim(std::string_view(line).substr(0, eq)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing key");
    std::string value(trim(std::string_view(line).substr(eq + 1)));
    // Arrays may span lines.
    while (bracket_balance_open(value) && std::getline(in, raw)) {
      ++line_no;
      value += " ";
      value += trim(strip_comment(raw));
    }
    if (section->contains(key))
      throw ConfigError("line " + std::to_string(start_line) + ": duplicate key '" + key + "'");
    TextParser p(value, start_line);
    (*section)[key] = p.value();
    p.finish();
  }
  return root;
}

std::vector<RunConfig> ExperimentConfig::run_configs() const {
  std::vector<RunConfig> out;
  for (int t : scenario.tasks)
    for (int m : training.memory)
      for (std::uint64_t s : training.seeds) {
        RunConfig rc;
        rc.num_tasks = t;
        rc.memory_size = m;
        rc.epochs = training.epochs;
        rc.batch_size = training.batch_size;
        rc.seed = s;
        rc.eval_every = training.eval_every;
        rc.precision = training.precision;
        rc.adam.lr = training.learning_rate;
        out.push_back(rc);
      }
  return out;
}

HoldoutMap ExperimentConfig::holdout() const {
  return scenario.holdout_shift == 0 ? make_holdout(scenario.seed) : holdout_with_shift(scenario.holdout_shift);
}

json ExperimentConfig::to_json() const {
  json tasks = json::array(), regimes = json::array();
  for (auto t : probe.tasks) tasks.push_back(probe::to_string(t));
  for (auto r : probe.regimes) regimes.push_back(probe::to_string(r));
  return {
      {"dataset", {{"counts", dataset.counts.to_json()["counts"]}, {"seed", dataset.seed}}},
      {"scenario",
       {{"tasks", scenario.tasks},
        {"holdout_shift", scenario.holdout_shift},
        {"train_fraction", scenario.train_fraction},
        {"seed", scenario.seed},
        {"permute", scenario.permute}}},
      {"training",
       {{"memory", training.memory},
        {"epochs", training.epochs},
        {"batch_size", training.batch_size},
        {"seeds", training.seeds},
        {"precision", training.precision == Precision::kFloat32 ? "float32" : "float64"},
        {"learning_rate", training.learning_rate},
        {"eval_every", training.eval_every}}},
      {"probe",
       {{"tasks", tasks},
        {"regimes", regimes},
        {"tap", probe.spec.tap},
        {"hidden", probe.spec.hidden},
        {"learning_rates", probe.spec.learning_rates},
        {"epochs", probe.spec.epochs},
        {"momentum", probe.spec.momentum},
        {"batch_size", probe.spec.batch_size},
        {"linear", probe.spec.linear},
        {"val_fraction", probe.spec.val_fraction},
        {"seed", probe.spec.seed},
        {"runs", probe.runs},
        {"curves", probe.curves}}},
      {"output", {{"dir", output_dir}}},
  };
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a table");
  static const std::set<std::string> kSections = {"dataset", "scenario", "training", "probe", "output"};
  for (const auto& [k, v] : j.items())
    if (!kSections.count(k))
      throw ConfigError("unknown section [" + k + "] (allowed: dataset, output, probe, scenario, training)");

  ExperimentConfig c;

  Section ds(j, "dataset");
  ds.allow({"per_cell", "counts", "seed"});
  if (ds.has("per_cell") && ds.has("counts")) throw ConfigError("dataset.per_cell and dataset.counts are exclusive");
  if (ds.has("per_cell")) {
    int n = 0;
    ds.read("per_cell", n);
    if (n < 1) throw ConfigError("dataset.per_cell must be >= 1");
    c.dataset.counts = DatasetConfig::uniform(n);
  }
  if (ds.has("counts")) {
    try {
      c.dataset.counts = DatasetConfig::from_json({{"counts", ds.at("counts")}});
    } catch (const std::exception& e) {
      throw ConfigError(std::string("dataset.counts: ") + e.what());
    }
    if (c.dataset.counts.total() <= 0) throw ConfigError("dataset.counts must request at least one image");
    for (const auto& row : c.dataset.counts.counts)
      for (int n : row)
        if (n < 0) throw ConfigError("dataset.counts entries must be >= 0");
  }
  ds.read("seed", c.dataset.seed);

  Section sc(j, "scenario");
  sc.allow({"tasks", "holdout_shift", "train_fraction", "seed", "permute"});
  sc.read("tasks", c.scenario.tasks);
  sc.read("holdout_shift", c.scenario.holdout_shift);
  sc.read("train_fraction", c.scenario.train_fraction);
  sc.read("seed", c.scenario.seed);
  sc.read("permute", c.scenario.permute);
  require_nonempty(c.scenario.tasks, "scenario.tasks");
  for (int t : c.scenario.tasks)
    if (!valid_num_tasks(t)) throw ConfigError("scenario.tasks: T must be one of {1,2,4,5,10}, got " + std::to_string(t));
  if (c.scenario.holdout_shift < 0 || c.scenario.holdout_shift >= 10)
    throw ConfigError("scenario.holdout_shift must be in [1,10), or 0 to draw from the seed");
  if (!(c.scenario.train_fraction > 0.0 && c.scenario.train_fraction < 1.0))
    throw ConfigError("scenario.train_fraction must be in (0,1)");

  Section tr(j, "training");
  tr.allow({"memory", "epochs", "batch_size", "seeds", "precision", "learning_rate", "eval_every"});
  tr.read("memory", c.training.memory);
  tr.read("epochs", c.training.epochs);
  tr.read("batch_size", c.training.batch_size);
  tr.read("seeds", c.training.seeds);
  tr.read("learning_rate", c.training.learning_rate);
  tr.read("eval_every", c.training.eval_every);
  if (tr.has("precision")) {
    std::string p;
    tr.read("precision", p);
    if (p == "float32" || p == "f32") {
      c.training.precision = Precision::kFloat32;
    } else if (p == "float64" || p == "f64") {
      c.training.precision = Precision::kFloat64;
    } else {
      throw ConfigError("training.precision must be \"float32\" or \"float64\"");
    }
  }
  require_nonempty(c.training.memory, "training.memory");
  require_nonempty(c.training.seeds, "training.seeds");
  for (int m : c.training.memory)
    if (!valid_memory_size(m))
      throw ConfigError("training.memory: M must be one of {0,50,100,250,500,1000}, got " + std::to_string(m));
  if (c.training.epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (c.training.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (c.training.eval_every < 1) throw ConfigError("training.eval_every must be >= 1");
  if (!(c.training.learning_rate > 0.0)) throw ConfigError("training.learning_rate must be > 0");

  Section pr(j, "probe");
  pr.allow({"tasks", "regimes", "tap", "hidden", "learning_rates", "epochs", "momentum", "batch_size", "linear",
            "val_fraction", "seed", "runs", "curves"});
  if (pr.has("tasks")) {
    std::vector<std::string> names;
    pr.read("tasks", names);
    c.probe.tasks.clear();
    try {
      for (const auto& n : names) c.probe.tasks.push_back(probe::parse_task(n));
    } catch (const DomainError& e) {
      throw ConfigError(std::string("probe.tasks: ") + e.what());
    }
  }
  if (pr.has("regimes")) {
    std::vector<std::string> names;
    pr.read("regimes", names);
    c.probe.regimes.clear();
    try {
      for (const auto& n : names) c.probe.regimes.push_back(probe::parse_regime(n));
    } catch (const DomainError& e) {
      throw ConfigError(std::string("probe.regimes: ") + e.what());
    }
  }
  auto& ps = c.probe.spec;
  pr.read("tap", ps.tap);
  pr.read("hidden", ps.hidden);
  pr.read("learning_rates", ps.learning_rates);
  pr.read("epochs", ps.epochs);
  pr.read("momentum", ps.momentum);
  pr.read("batch_size", ps.batch_size);
  pr.read("linear", ps.linear);
  pr.read("val_fraction", ps.val_fraction);
  pr.read("seed", ps.seed);
  pr.read("runs", c.probe.runs);
  pr.read("curves", c.probe.curves);
  require_nonempty(c.probe.tasks, "probe.tasks");
  require_nonempty(c.probe.regimes, "probe.regimes");
  require_nonempty(ps.hidden, "probe.hidden");
  require_nonempty(ps.learning_rates, "probe.learning_rates");
  for (int h : ps.hidden)
    if (h < 1) throw ConfigError("probe.hidden entries must be >= 1");
  for (double lr : ps.learning_rates)
    if (!(lr > 0.0)) throw ConfigError("probe.learning_rates entries must be > 0");
  if (ps.epochs < 1) throw ConfigError("probe.epochs must be >= 1");
  if (ps.momentum < 0.0 || ps.momentum >= 1.0) throw ConfigError("probe.momentum must be in [0,1)");
  if (ps.batch_size < 0) throw ConfigError("probe.batch_size must be >= 0 (0 = full batch)");
  if (!(ps.val_fraction > 0.0 && ps.val_fraction < 1.0)) throw ConfigError("probe.val_fraction must be in (0,1)");
  const auto& taps = nn::Network<float>::tap_names();
  if (std::find(taps.begin(), taps.end(), ps.tap) == taps.end()) {
    std::string list;
    for (const auto& n : taps) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("probe.tap: unknown tap '" + ps.tap + "'; available taps: " + list);
  }

  Section out(j, "output");
  out.allow({"dir"});
  out.read("dir", c.output_dir);
  if (c.output_dir.empty()) throw ConfigError("output.dir must not be empty");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  if (path.extension() == ".json") {
    try {
      j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  } else {
    try {
      j = parse_config_text(ss.str());
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return ExperimentConfig::from_json(j);
}

}  // namespace clood
