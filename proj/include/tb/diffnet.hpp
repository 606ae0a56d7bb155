#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tb/tensor.hpp"

namespace tb::diffnet {

/// Per-sample feature map extents. Dense outputs are K x 1 x 1.
struct FeatureShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
  bool operator==(const FeatureShape&) const = default;
  std::string str() const;
};

enum class LayerKind : std::uint8_t { Dense = 1, Conv2d = 2, AvgPool2 = 3, Elu = 4 };

const char* layer_kind_name(LayerKind kind);

/// One layer record. Dense and Conv2d carry parameters; the rest are fixed maps.
///
/// Dense weight is [out, in] over the flattened input. Conv2d weight is
/// [out_channels, in_channels, k, k], stride 1, zero padding k/2 so the
/// spatial extent is preserved.
struct Layer {
  LayerKind kind = LayerKind::Elu;
  FeatureShape input;
  FeatureShape output;
  std::size_t kernel = 0;
  Tensor weight;
  Tensor bias;

  bool has_params() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
};

Layer dense(FeatureShape input, std::size_t out);
Layer conv2d(FeatureShape input, std::size_t out_channels, std::size_t kernel);
Layer avg_pool2(FeatureShape input);
/// Exponential-linear unit: x for x > 0, e^x - 1 otherwise.
Layer elu(FeatureShape input);

/// Activations recorded by a forward pass; entry k is the input to layer k.
struct Tape {
  std::vector<Tensor> activations;
};

class Network {
 public:
  /// Throws ContractError naming the first layer whose input does not match
  /// the previous output.
  explicit Network(std::vector<Layer> layers);

  const FeatureShape& input_shape() const { return layers_.front().input; }
  std::size_t class_count() const { return layers_.back().output.size(); }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Raw scores, N x K.
  Tensor forward(const Tensor& batch) const;
  Tensor forward(const Tensor& batch, Tape& tape) const;

  /// Pulls dL/dlogits back through the recorded pass. Returns dL/dinput and,
  /// when `param_grads` is non-null, fills it parallel to parameters().
  Tensor backward(const Tape& tape, const Tensor& dlogits,
                  std::vector<Tensor>* param_grads = nullptr) const;

  /// Weight then bias of every parameterised layer, in layer order.
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor*> parameters();

  bool operator==(const Network& other) const;

 private:
  void check_batch(const Tensor& batch) const;

  std::vector<Layer> layers_;
};

/// Loss value with the gradient with respect to the evaluated input batch.
struct LossGrad {
  double loss = 0.0;
  Tensor grad;
};

/// Mean over the batch of -log softmax(logits)[label].
double cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Loss and dLoss/dlogits for the batch-mean cross-entropy.
std::pair<double, Tensor> cross_entropy_with_grad(const Tensor& logits,
                                                  std::span<const int> labels);

/// Per-sample cross-entropy values (no batch mean).
std::vector<double> cross_entropy_per_sample(const Tensor& logits, std::span<const int> labels);

LossGrad input_gradient(const Network& net, const Tensor& batch, std::span<const int> labels);

struct ParamLossGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;
  Tensor logits;
};

ParamLossGrad parameter_gradient(const Network& net, const Tensor& batch,
                                 std::span<const int> labels);

/// Argmax per row; ties go to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

using LossGradFn = std::function<LossGrad(const Tensor&)>;

/// Worst relative error between the analytic gradient and central
/// differences over every input coordinate. The relative denominator is
/// max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const LossGradFn& fn, const Tensor& x, double h);
double finite_diff_check(const Network& net, const Tensor& batch, std::span<const int> labels,
                         double h);

// Construction helpers -----------------------------------------------------

/// Glorot-uniform weights in [-s, s], s = sqrt(6 / (fan_in + fan_out)); zero biases.
void init_weights(Network& net, std::uint64_t seed);

/// Architecture names: linear, mlp, cnn_a, cnn_b.
const std::vector<std::string>& architecture_names();
Network build_architecture(const std::string& name, FeatureShape input, std::size_t classes,
                           std::uint64_t seed);

// Persistence ---------------------------------------------------------------

class NetFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> serialize(const Network& net);
Network deserialize(std::span<const std::uint8_t> bytes);
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace tb::diffnet
