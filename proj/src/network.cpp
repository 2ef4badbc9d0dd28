#include "clood/network.hpp"

#include <cmath>

#include "clood/errors.hpp"
#include "clood/layers.hpp"
#include "clood/rng.hpp"

namespace clood::nn {
namespace {

constexpr int kChannels[] = {1, 16, 32, 48, 64};
constexpr int kConvLayers = 4;

}  // namespace

template <typename T>
struct Network<T>::Workspace {
  // conv block k: input in[k], post-relu act[k], pooled output pool[k]
  // (blocks 2..4 only).
  const Tensor<T>* in[kConvLayers] = {};
  Tensor<T> act[kConvLayers];
  Tensor<T> pool[kConvLayers];
  std::vector<std::int32_t> arg[kConvLayers];
  Tensor<T> flat;
  Tensor<T> hidden;
  Tensor<T> logits;
};

template <typename T>
Network<T>::Network(NetworkSpec spec) : spec_(spec) {
  if (spec.input_size < 8 || spec.input_size % 8 != 0) {
    throw DomainError("network input size must be a positive multiple of 8");
  }
  if (spec.num_classes < 2) throw DomainError("network needs at least 2 classes");
  for (int k = 0; k < kConvLayers; ++k) {
    const std::string name = "conv" + std::to_string(k + 1);
    params_.push_back({name + ".weight", {3, 3, kChannels[k], kChannels[k + 1]}, {}});
    params_.push_back({name + ".bias", {kChannels[k + 1]}, {}});
  }
  params_.push_back({"dense1.weight", {spec.flat_features(), kReprWidth}, {}});
  params_.push_back({"dense1.bias", {kReprWidth}, {}});
  params_.push_back({"dense2.weight", {kReprWidth, spec.num_classes}, {}});
  params_.push_back({"dense2.bias", {spec.num_classes}, {}});
  for (auto& p : params_) p.value.assign(numel(p.shape), T(0));
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
const std::vector<std::string>& Network<T>::tap_names() {
  static const std::vector<std::string> kTaps = {"block1", "block2", "block3", "block4", "repr", "logits"};
  return kTaps;
}

template <typename T>
void Network<T>::check_batch(const Tensor<T>& batch) const {
  const int s = spec_.input_size;
  if (batch.shape.size() != 4 || batch.shape[0] < 1 || batch.shape[1] != s || batch.shape[2] != s ||
      batch.shape[3] != 1) {
    throw DomainError("network expects a (B," + std::to_string(s) + "," + std::to_string(s) +
                      ",1) batch, got " + shape_str(batch.shape));
  }
  if (batch.data.size() != numel(batch.shape)) throw DomainError("batch data does not match its shape");
}

template <typename T>
void Network<T>::run_forward(const Tensor<T>& batch, Workspace& ws) const {
  check_batch(batch);
  const int B = batch.dim(0);
  const Tensor<T>* in = &batch;
  for (int k = 0; k < kConvLayers; ++k) {
    const auto& w = params_[2 * k];
    const auto& b = params_[2 * k + 1];
    ws.in[k] = in;
    ops::conv3x3_forward(*in, w.value.data(), b.value.data(), kChannels[k + 1], ws.act[k]);
    ops::relu_inplace(ws.act[k]);
    if (k == 0) {
      in = &ws.act[k];
    } else {
      ops::maxpool2_forward(ws.act[k], ws.pool[k], ws.arg[k]);
      in = &ws.pool[k];
    }
  }
  const int flat = spec_.flat_features();
  ws.flat = Tensor<T>({B, flat});
  ws.flat.data = in->data;
  ops::dense_forward(ws.flat.ptr(), B, flat, params_[8].value.data(), params_[9].value.data(),
                     kReprWidth, ws.hidden);
  ops::relu_inplace(ws.hidden);
  ops::dense_forward(ws.hidden.ptr(), B, kReprWidth, params_[10].value.data(),
                     params_[11].value.data(), spec_.num_classes, ws.logits);
}

namespace {

template <typename T>
Tensor<T> flatten(const Tensor<T>& t) {
  Tensor<T> out;
  out.shape = {t.dim(0), static_cast<int>(t.size() / static_cast<std::size_t>(t.dim(0)))};
  out.data = t.data;
  return out;
}

}  // namespace

template <typename T>
ForwardResult<T> Network<T>::forward(const Tensor<T>& batch, bool want_taps) const {
  Workspace ws;
  run_forward(batch, ws);
  ForwardResult<T> r;
  if (want_taps) {
    r.taps.emplace("block1", flatten(ws.act[0]));
    r.taps.emplace("block2", flatten(ws.pool[1]));
    r.taps.emplace("block3", flatten(ws.pool[2]));
    r.taps.emplace("block4", ws.flat);
    r.taps.emplace("repr", ws.hidden);
    r.taps.emplace("logits", ws.logits);
  }
  r.logits = std::move(ws.logits);
  return r;
}

template <typename T>
Tensor<T> Network<T>::features(const Tensor<T>& batch, std::string_view tap) const {
  const auto& names = tap_names();
  if (std::find(names.begin(), names.end(), tap) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw DomainError("unknown tap '" + std::string(tap) + "'; available taps: " + list);
  }
  Workspace ws;
  run_forward(batch, ws);
  if (tap == "block1") return flatten(ws.act[0]);
  if (tap == "block2") return flatten(ws.pool[1]);
  if (tap == "block3") return flatten(ws.pool[2]);
  if (tap == "block4") return ws.flat;
  if (tap == "repr") return ws.hidden;
  return ws.logits;
}

template <typename T>
LossAndGradients<T> Network<T>::loss_and_gradients(const Tensor<T>& batch,
                                                   std::span<const int> labels) const {
  if (labels.size() != static_cast<std::size_t>(batch.shape.empty() ? 0 : batch.dim(0))) {
    throw DomainError("label count does not match batch size");
  }
  Workspace ws;
  run_forward(batch, ws);
  const int B = batch.dim(0);
  auto xent = softmax_xent(ws.logits, labels);

  LossAndGradients<T> out;
  out.loss = xent.loss;
  out.grads.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) out.grads[i].assign(params_[i].value.size(), T(0));

  Tensor<T> d_hidden({B, kReprWidth});
  ops::dense_backward(xent.grad, ws.hidden.ptr(), kReprWidth, params_[10].value.data(),
                      out.grads[10].data(), out.grads[11].data(), d_hidden.ptr());
  ops::relu_backward_inplace(ws.hidden, d_hidden);
  const int flat = spec_.flat_features();
  Tensor<T> d_flat({B, flat});
  ops::dense_backward(d_hidden, ws.flat.ptr(), flat, params_[8].value.data(), out.grads[8].data(),
                      out.grads[9].data(), d_flat.ptr());

  Tensor<T> grad = std::move(d_flat);
  for (int k = kConvLayers - 1; k >= 0; --k) {
    if (k > 0) {
      grad.shape = ws.pool[k].shape;
      Tensor<T> d_act;
      ops::maxpool2_backward(grad, ws.arg[k], ws.act[k].shape, d_act);
      grad = std::move(d_act);
    } else {
      grad.shape = ws.act[k].shape;
    }
    ops::relu_backward_inplace(ws.act[k], grad);
    Tensor<T> d_in;
    ops::conv3x3_backward(grad, *ws.in[k], params_[2 * k].value.data(),
                          out.grads[2 * k].data(), out.grads[2 * k + 1].data(), k > 0 ? &d_in : nullptr);
    grad = std::move(d_in);
  }
  out.logits = std::move(ws.logits);
  return out;
}

template <typename T>
void init_params(Network<T>& net, std::uint64_t seed) {
  auto& params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.shape.size() == 1) {
      std::fill(p.value.begin(), p.value.end(), T(0));
      continue;
    }
    int fan_in = 1;
    for (std::size_t d = 0; d + 1 < p.shape.size(); ++d) fan_in *= p.shape[d];
    const double bound = std::sqrt(2.0 / fan_in);
    Rng rng(derive_seed(seed, tag("init"), i));
    for (T& v : p.value) v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <typename T>
SoftmaxXent<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.shape.size() != 2) throw DomainError("logits must be (B, classes)");
  const int B = logits.dim(0), C = logits.dim(1);
  if (labels.size() != static_cast<std::size_t>(B)) throw DomainError("label count does not match logits");
  SoftmaxXent<T> r;
  r.probs = Tensor<T>({B, C});
  r.grad = Tensor<T>({B, C});
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= C) throw DomainError("label out of range: " + std::to_string(y));
    const T* z = logits.ptr() + static_cast<std::size_t>(b) * C;
    T mx = z[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, z[c]);
    T sum = 0;
    T* p = r.probs.ptr() + static_cast<std::size_t>(b) * C;
    for (int c = 0; c < C; ++c) {
      p[c] = std::exp(z[c] - mx);
      sum += p[c];
    }
    for (int c = 0; c < C; ++c) p[c] /= sum;
    total += static_cast<double>(std::log(sum) + mx - z[y]);
    T* g = r.grad.ptr() + static_cast<std::size_t>(b) * C;
    for (int c = 0; c < C; ++c) g[c] = (p[c] - (c == y ? T(1) : T(0))) / static_cast<T>(B);
  }
  r.loss = static_cast<T>(total / B);
  return r;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  const int B = logits.dim(0), C = logits.dim(1);
  std::vector<int> out(B);
  for (int b = 0; b < B; ++b) {
    const T* z = logits.ptr() + static_cast<std::size_t>(b) * C;
    int best = 0;
    for (int c = 1; c < C; ++c) {
      if (z[c] > z[best]) best = c;
    }
    out[b] = best;
  }
  return out;
}

template <typename T>
AdamState<T> AdamState<T>::for_params(const std::vector<Param<T>>& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.size(), T(0));
    s.v.emplace_back(p.value.size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(std::vector<Param<T>>& params, const Gradients<T>& grads, AdamState<T>& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DomainError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].value.size() || state.m[i].size() != params[i].value.size() ||
        state.v[i].size() != params[i].value.size()) {
      throw DomainError("adam_step: shape mismatch for " + params[i].name);
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T step_size = static_cast<T>(c.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(c.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* w = params[i].value.data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    const T* g = grads[i].data();
    for (std::size_t j = 0, n = params[i].value.size(); j < n; ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

#define CLOOD_INSTANTIATE(T)                                                               \
  template class Network<T>;                                                             \
  template void init_params<T>(Network<T>&, std::uint64_t);                              \
  template SoftmaxXent<T> softmax_xent<T>(const Tensor<T>&, std::span<const int>);       \
  template std::vector<int> argmax_rows<T>(const Tensor<T>&);                            \
  template struct AdamState<T>;                                                          \
  template void adam_step<T>(std::vector<Param<T>>&, const Gradients<T>&, AdamState<T>&);

CLOOD_INSTANTIATE(float)
CLOOD_INSTANTIATE(double)

#undef CLOOD_INSTANTIATE

}  // namespace clood::nn
