#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clood/tensor.hpp"

namespace clood::nn {

// Reference classifier: four 3x3 conv blocks then two dense layers.
//   conv 1->16, relu | conv 16->32, relu, pool | conv 32->48, relu, pool |
//   conv 48->64, relu, pool | flatten | dense ->128, relu | dense 128->10
// input_size must be a positive multiple of 8; 32 is the production size,
// smaller inputs exist for gradient verification.
struct NetworkSpec {
  int input_size = 32;
  int num_classes = 10;

  int flat_features() const { return 64 * (input_size / 8) * (input_size / 8); }
  bool operator==(const NetworkSpec&) const = default;
};

inline constexpr int kReprWidth = 128;

template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
};

template <typename T>
using Gradients = std::vector<std::vector<T>>;

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  // Flattened (B, features) activations keyed by tap name.
  std::map<std::string, Tensor<T>, std::less<>> taps;
};

template <typename T>
struct LossAndGradients {
  T loss = 0;
  Tensor<T> logits;
  Gradients<T> grads;
};

template <typename T>
class Network {
 public:
  explicit Network(NetworkSpec spec = {});

  const NetworkSpec& spec() const { return spec_; }
  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  std::size_t parameter_count() const;

  // Tap names in network order: block1..block4, repr, logits.
  static const std::vector<std::string>& tap_names();

  // batch is (B, S, S, 1) with S = spec().input_size.
  ForwardResult<T> forward(const Tensor<T>& batch, bool want_taps = false) const;

  // (B, width) activations of one tap. Throws DomainError for unknown taps.
  Tensor<T> features(const Tensor<T>& batch, std::string_view tap) const;

  // Mean softmax cross-entropy over the batch and its parameter gradients.
  LossAndGradients<T> loss_and_gradients(const Tensor<T>& batch, std::span<const int> labels) const;

  template <typename U>
  Network<U> cast() const {
    Network<U> out(spec_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.params()[i].value.assign(params_[i].value.begin(), params_[i].value.end());
    }
    return out;
  }

 private:
  struct Workspace;
  void run_forward(const Tensor<T>& batch, Workspace& ws) const;
  void check_batch(const Tensor<T>& batch) const;

  NetworkSpec spec_;
  std::vector<Param<T>> params_;
};

// Uniform(-b, b) with b = sqrt(2 / fan_in) for every weight, zero biases.
// Draws are made in double from a per-parameter stream, so float and double
// networks initialized from one seed hold the same values up to rounding.
template <typename T>
void init_params(Network<T>& net, std::uint64_t seed);

template <typename T>
struct SoftmaxXent {
  T loss = 0;
  Tensor<T> grad;   // d(mean loss)/d(logits)
  Tensor<T> probs;
};

// Numerically stable; labels must lie in [0, classes).
template <typename T>
SoftmaxXent<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels);

// Index of the row maximum; ties resolve to the smallest class index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

struct AdamConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;

  static AdamState for_params(const std::vector<Param<T>>& params, AdamConfig config = {});
};

// One bias-corrected Adam update. Throws DomainError on shape mismatch.
template <typename T>
void adam_step(std::vector<Param<T>>& params, const Gradients<T>& grads, AdamState<T>& state);

}  // namespace clood::nn
