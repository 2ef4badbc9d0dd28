#include "clood/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "clood/batch.hpp"
#include "clood/checkpoint.hpp"
#include "clood/errors.hpp"
#include "clood/log.hpp"
#include "clood/rng.hpp"

namespace clood::probe {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::kFont: return "font";
    case Task::kChar: return "char";
    case Task::kFontChar: return "font_char";
  }
  return "?";
}

std::string_view to_string(Regime r) {
  return r == Regime::kIidOnly ? "iid_only" : "iid_plus_ood";
}

Task parse_task(std::string_view s) {
  if (s == "font") return Task::kFont;
  if (s == "char") return Task::kChar;
  if (s == "font_char") return Task::kFontChar;
  throw DomainError("unknown probe task '" + std::string(s) + "' (font, char, font_char)");
}

Regime parse_regime(std::string_view s) {
  if (s == "iid_only") return Regime::kIidOnly;
  if (s == "iid_plus_ood") return Regime::kIidPlusOod;
  throw DomainError("unknown probe regime '" + std::string(s) + "' (iid_only, iid_plus_ood)");
}

int num_classes(Task t) {
  return t == Task::kFontChar ? glyph::kNumChars * glyph::kNumFonts : 10;
}

int task_label(Task t, const LabelPair& l) {
  switch (t) {
    case Task::kFont: return label_of(l, LabelKind::kFont);
    case Task::kChar: return label_of(l, LabelKind::kChar);
    case Task::kFontChar: return label_of(l, LabelKind::kFontChar);
  }
  return 0;
}

template <typename T>
FeatureSet extract_features(const nn::Network<T>& net, const Dataset& dataset,
                            std::span<const std::size_t> indices, std::string_view tap,
                            int batch_size) {
  const auto& taps = nn::Network<T>::tap_names();
  if (std::find(taps.begin(), taps.end(), tap) == taps.end()) {
    // Delegate for the uniform error message.
    net.features(gather_images<T>(dataset, indices.first(0)), tap);
  }
  FeatureSet out;
  out.indices.assign(indices.begin(), indices.end());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(dataset.labels(i));
  if (indices.empty()) return out;

  std::size_t row = 0;
  for (std::size_t s = 0; s < indices.size(); s += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min<std::size_t>(batch_size, indices.size() - s);
    const auto f = net.features(gather_images<T>(dataset, indices.subspan(s, n)), tap);
    const int width = f.shape[1];
    if (out.x.size() == 0) out.x.resize(static_cast<Eigen::Index>(indices.size()), width);
    for (std::size_t r = 0; r < n; ++r, ++row)
      for (int c = 0; c < width; ++c)
        out.x(static_cast<Eigen::Index>(row), c) = static_cast<float>(f.data[r * width + c]);
  }
  return out;
}

LabeledRows labeled(const FeatureSet& f, Task task) {
  LabeledRows out;
  out.x = f.x;
  out.y.reserve(f.labels.size());
  for (const auto& l : f.labels) out.y.push_back(task_label(task, l));
  return out;
}

LabeledRows concat(const LabeledRows& a, const LabeledRows& b) {
  if (a.y.empty()) return b;
  if (b.y.empty()) return a;
  if (a.x.cols() != b.x.cols()) throw DomainError("probe feature widths differ");
  LabeledRows out;
  out.x.resize(a.x.rows() + b.x.rows(), a.x.cols());
  out.x << a.x, b.x;
  out.y = a.y;
  out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  return out;
}

namespace {

using RowVec = Eigen::RowVectorXf;

struct Standardizer {
  RowVec mean, inv_std;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    const float n = static_cast<float>(x.rows());
    s.mean = x.colwise().sum() / n;
    const Matrix centered = x.rowwise() - s.mean;
    RowVec var = centered.array().square().colwise().sum() / n;
    s.inv_std = var.unaryExpr([](float v) { return v > 1e-12f ? 1.0f / std::sqrt(v) : 1.0f; });
    return s;
  }

  Matrix apply(const Matrix& x) const {
    if (x.rows() == 0) return x;
    return (x.rowwise() - mean).array().rowwise() * inv_std.array();
  }
};

Matrix take_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<int> take(const std::vector<int>& y, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(y[r]);
  return out;
}

class Mlp {
 public:
  Mlp(int in, int hidden, int classes, bool linear, std::uint64_t seed) : linear_(linear) {
    Rng rng(seed);
    auto fill = [&](Matrix& w, int fan_in, int fan_out) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      w.resize(fan_in, fan_out);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
    };
    if (linear_) {
      fill(w2_, in, classes);
    } else {
      fill(w1_, in, hidden);
      b1_ = RowVec::Zero(hidden);
      fill(w2_, hidden, classes);
    }
    b2_ = RowVec::Zero(classes);
    vw1_ = Matrix::Zero(w1_.rows(), w1_.cols());
    vb1_ = RowVec::Zero(b1_.size());
    vw2_ = Matrix::Zero(w2_.rows(), w2_.cols());
    vb2_ = RowVec::Zero(b2_.size());
  }

  Matrix logits(const Matrix& x) const {
    if (linear_) return (x * w2_).rowwise() + b2_;
    Matrix h = ((x * w1_).rowwise() + b1_).cwiseMax(0.0f);
    return (h * w2_).rowwise() + b2_;
  }

  void step(const Matrix& x, const std::vector<int>& y, float lr, float momentum) {
    const auto n = x.rows();
    Matrix h;
    if (!linear_) h = ((x * w1_).rowwise() + b1_).cwiseMax(0.0f);
    const Matrix& a = linear_ ? x : h;
    Matrix dz = (a * w2_).rowwise() + b2_;
    for (Eigen::Index r = 0; r < n; ++r) {
      auto row = dz.row(r);
      row.array() -= row.maxCoeff();
      row = row.array().exp().matrix();
      row /= row.sum();
      row(y[static_cast<std::size_t>(r)]) -= 1.0f;
    }
    dz /= static_cast<float>(n);
    const Matrix gw2 = a.transpose() * dz;
    const RowVec gb2 = dz.colwise().sum();
    if (!linear_) {
      Matrix dh = dz * w2_.transpose();
      dh = (h.array() > 0.0f).select(dh, 0.0f);
      const Matrix gw1 = x.transpose() * dh;
      const RowVec gb1 = dh.colwise().sum();
      vw1_ = momentum * vw1_ + gw1;
      vb1_ = momentum * vb1_ + gb1;
      w1_ -= lr * vw1_;
      b1_ -= lr * vb1_;
    }
    vw2_ = momentum * vw2_ + gw2;
    vb2_ = momentum * vb2_ + gb2;
    w2_ -= lr * vw2_;
    b2_ -= lr * vb2_;
  }

  double accuracy(const Matrix& x, const std::vector<int>& y) const {
    if (y.empty()) return 0.0;
    const Matrix z = logits(x);
    std::size_t hit = 0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      Eigen::Index best = 0;
      z.row(r).maxCoeff(&best);  // first maximum on ties
      hit += best == y[static_cast<std::size_t>(r)];
    }
    return static_cast<double>(hit) / static_cast<double>(y.size());
  }

 private:
  bool linear_;
  Matrix w1_, w2_, vw1_, vw2_;
  RowVec b1_, b2_, vb1_, vb2_;
};

}  // namespace

ProbeResult train_probe(const LabeledRows& train, const LabeledRows& iid_test,
                        const LabeledRows& ood_test, const ProbeSpec& spec) {
  if (train.y.empty()) throw DomainError("probe has no training rows");
  if (spec.epochs < 1) throw DomainError("probe epochs must be >= 1");
  if (spec.val_fraction <= 0.0 || spec.val_fraction >= 1.0)
    throw DomainError("probe val_fraction must be in (0, 1)");
  if (spec.learning_rates.empty() || (!spec.linear && spec.hidden.empty()))
    throw DomainError("probe grid is empty");
  for (int h : spec.hidden)
    if (h < 1) throw DomainError("probe hidden sizes must be >= 1");
  for (double lr : spec.learning_rates)
    if (!(lr > 0.0)) throw DomainError("probe learning rates must be > 0");
  const int classes = num_classes(spec.task);
  for (int y : train.y)
    if (y < 0 || y >= classes) throw DomainError("probe label out of range for task");

  // Stratified validation rows.
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train.y.size(); ++i) by_class[train.y[i]].push_back(i);
  Rng split_rng(derive_seed(spec.seed, tag("probe_val")));
  std::vector<std::size_t> fit_rows, val_rows;
  for (auto& [cls, rows] : by_class) {
    split_rng.shuffle(rows.begin(), rows.end());
    auto k = static_cast<std::size_t>(std::lround(spec.val_fraction * static_cast<double>(rows.size())));
    k = std::min(k, rows.size() - 1);
    val_rows.insert(val_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k));
    fit_rows.insert(fit_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end());
  }
  std::sort(fit_rows.begin(), fit_rows.end());
  std::sort(val_rows.begin(), val_rows.end());

  const Matrix raw_fit = take_rows(train.x, fit_rows);
  const Standardizer norm = Standardizer::fit(raw_fit);
  const Matrix x_fit = norm.apply(raw_fit);
  const std::vector<int> y_fit = take(train.y, fit_rows);
  const Matrix x_val = norm.apply(take_rows(train.x, val_rows));
  const std::vector<int> y_val = take(train.y, val_rows);
  const Matrix x_iid = norm.apply(iid_test.x);
  const Matrix x_ood = norm.apply(ood_test.x);

  std::vector<int> hidden = spec.linear ? std::vector<int>{0} : spec.hidden;
  std::sort(hidden.begin(), hidden.end());
  hidden.erase(std::unique(hidden.begin(), hidden.end()), hidden.end());
  std::vector<double> lrs = spec.learning_rates;
  std::sort(lrs.begin(), lrs.end(), std::greater<>());
  lrs.erase(std::unique(lrs.begin(), lrs.end()), lrs.end());

  ProbeResult best;
  best.tap = spec.tap;
  best.task = spec.task;
  best.regime = spec.regime;
  best.val_accuracy = -1.0;
  best.train_rows = train.y.size();
  best.train_classes = static_cast<int>(by_class.size());

  const auto n_fit = static_cast<std::size_t>(x_fit.rows());
  const std::size_t batch = spec.batch_size > 0 ? static_cast<std::size_t>(spec.batch_size) : n_fit;
  for (int h : hidden) {
    for (double lr : lrs) {
      Mlp mlp(static_cast<int>(x_fit.cols()), h, classes, spec.linear,
              derive_seed(spec.seed, tag("probe_init"), static_cast<std::uint64_t>(h)));
      Rng order_rng(derive_seed(spec.seed, tag("probe_order"), static_cast<std::uint64_t>(h)));
      std::vector<std::size_t> order(n_fit);
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (int e = 0; e < spec.epochs; ++e) {
        if (batch >= n_fit) {
          mlp.step(x_fit, y_fit, static_cast<float>(lr), static_cast<float>(spec.momentum));
          continue;
        }
        order_rng.shuffle(order.begin(), order.end());
        for (std::size_t s = 0; s < n_fit; s += batch) {
          std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(s),
                                        order.begin() + static_cast<std::ptrdiff_t>(std::min(n_fit, s + batch)));
          mlp.step(take_rows(x_fit, rows), take(y_fit, rows), static_cast<float>(lr),
                   static_cast<float>(spec.momentum));
        }
      }
      const double val = y_val.empty() ? mlp.accuracy(x_fit, y_fit) : mlp.accuracy(x_val, y_val);
      best.grid.push_back({h, lr, val});
      log::debug("probe " + std::string(to_string(spec.task)) + " h=" + std::to_string(h) +
                 " lr=" + std::to_string(lr) + " val=" + std::to_string(val));
      if (val > best.val_accuracy) {
        best.hidden = h;
        best.lr = lr;
        best.val_accuracy = val;
        best.iid_accuracy = mlp.accuracy(x_iid, iid_test.y);
        best.ood_accuracy = mlp.accuracy(x_ood, ood_test.y);
      }
    }
  }
  return best;
}

OodHalves split_ood(const Dataset& dataset, std::span<const std::size_t> ood_test) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i : ood_test) {
    const auto& l = dataset.labels(i);
    cells[{l.char_id, l.font_id}].push_back(i);
  }
  OodHalves out;
  for (auto& [cell, rows] : cells) {
    const std::size_t half = rows.size() / 2;
    out.train.insert(out.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(half));
    out.test.insert(out.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(half), rows.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

template <typename T>
ProbeFeatures extract_probe_features(const nn::Network<T>& net, const Dataset& dataset,
                                     const Scenario& scenario, std::string_view tap) {
  std::vector<std::size_t> pool;
  for (const auto& e : scenario.experiences) pool.insert(pool.end(), e.train.begin(), e.train.end());
  std::sort(pool.begin(), pool.end());
  const OodHalves halves = split_ood(dataset, scenario.ood_test);
  ProbeFeatures f;
  f.pool_train = extract_features(net, dataset, pool, tap);
  f.iid_test = extract_features(net, dataset, scenario.iid_test, tap);
  f.ood_train = extract_features(net, dataset, halves.train, tap);
  f.ood_test = extract_features(net, dataset, halves.test, tap);
  return f;
}

ProbeResult run_probe(const ProbeFeatures& features, const ProbeSpec& spec) {
  LabeledRows train = labeled(features.pool_train, spec.task);
  if (spec.regime == Regime::kIidPlusOod) train = concat(train, labeled(features.ood_train, spec.task));
  return train_probe(train, labeled(features.iid_test, spec.task), labeled(features.ood_test, spec.task),
                     spec);
}

template <typename T>
std::vector<ProbeResult> probe_battery(const nn::Network<T>& net, const Dataset& dataset,
                                       const Scenario& scenario, std::span<const Task> tasks,
                                       std::span<const Regime> regimes, const ProbeSpec& base,
                                       const std::string& checkpoint_name) {
  const ProbeFeatures features = extract_probe_features(net, dataset, scenario, base.tap);
  std::vector<ProbeResult> out;
  for (Task task : tasks) {
    for (Regime regime : regimes) {
      ProbeSpec spec = base;
      spec.task = task;
      spec.regime = regime;
      ProbeResult r = run_probe(features, spec);
      r.checkpoint = checkpoint_name;
      log::info("probe " + checkpoint_name + " " + std::string(to_string(task)) + "/" +
                std::string(to_string(regime)) + " iid=" + std::to_string(r.iid_accuracy) +
                " ood=" + std::to_string(r.ood_accuracy));
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<ProbeResult> probe_over_experiences(const std::vector<std::filesystem::path>& checkpoints,
                                                const Dataset& dataset, const Scenario& scenario,
                                                const ProbeSpec& spec) {
  std::string missing;
  for (const auto& p : checkpoints)
    if (!std::filesystem::exists(p)) missing += (missing.empty() ? "" : ", ") + p.string();
  if (!missing.empty()) throw DomainError("missing checkpoint(s): " + missing);
  std::vector<ProbeResult> out;
  for (const auto& p : checkpoints) {
    const auto loaded = nn::load_checkpoint<float>(p);
    ProbeResult r = run_probe(extract_probe_features(loaded.net, dataset, scenario, spec.tap), spec);
    r.checkpoint = p.filename().string();
    out.push_back(std::move(r));
  }
  return out;
}

std::string to_csv_rows(const ProbeResult& r) {
  std::string out;
  char buf[512];
  const std::pair<const char*, double> rows[] = {{"iid_test", r.iid_accuracy}, {"ood_test", r.ood_accuracy}};
  for (const auto& [split, acc] : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%d,%.17g,%s,%.17g\n", r.checkpoint.c_str(), r.tap.c_str(),
                  std::string(to_string(r.task)).c_str(), std::string(to_string(r.regime)).c_str(),
                  r.hidden, r.lr, split, acc);
    out += buf;
  }
  return out;
}

#define CLOOD_PROBE_INSTANTIATE(T)                                                                      \
  template FeatureSet extract_features<T>(const nn::Network<T>&, const Dataset&,                        \
                                          std::span<const std::size_t>, std::string_view, int);         \
  template ProbeFeatures extract_probe_features<T>(const nn::Network<T>&, const Dataset&,               \
                                                   const Scenario&, std::string_view);                  \
  template std::vector<ProbeResult> probe_battery<T>(const nn::Network<T>&, const Dataset&,             \
                                                     const Scenario&, std::span<const Task>,            \
                                                     std::span<const Regime>, const ProbeSpec&,         \
                                                     const std::string&);

CLOOD_PROBE_INSTANTIATE(float)
CLOOD_PROBE_INSTANTIATE(double)

}  // namespace clood::probe
