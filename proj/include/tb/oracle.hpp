#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "tb/diffnet.hpp"
#include "tb/tensor.hpp"

namespace tb::attacks {

using diffnet::LossGrad;

/// Anything that assigns class labels to an image batch.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::vector<int> predict(const Tensor& batch) const = 0;
};

/// Yields the batch-mean loss and its gradient with respect to the batch.
///
/// Implementations must tolerate concurrent evaluate() calls.
class GradientOracle {
 public:
  virtual ~GradientOracle() = default;
  virtual LossGrad evaluate(const Tensor& batch, std::span<const int> labels) const = 0;
};

/// Logits at a point plus the vector-Jacobian product back to the input.
struct Linearization {
  Tensor logits;
  std::function<Tensor(const Tensor&)> pullback;
};

/// A classifier with differentiable logits. Loss is cross-entropy on the logits.
class DifferentiableModel : public Classifier, public GradientOracle {
 public:
  virtual Linearization linearize(const Tensor& batch) const = 0;
  virtual Tensor logits(const Tensor& batch) const { return linearize(batch).logits; }

  std::vector<int> predict(const Tensor& batch) const override;
  LossGrad evaluate(const Tensor& batch, std::span<const int> labels) const override;
};

class NetworkModel final : public DifferentiableModel {
 public:
  explicit NetworkModel(std::shared_ptr<const diffnet::Network> net);

  Linearization linearize(const Tensor& batch) const override;
  Tensor logits(const Tensor& batch) const override;
  const diffnet::Network& network() const { return *net_; }

 private:
  std::shared_ptr<const diffnet::Network> net_;
};

using ModelPtr = std::shared_ptr<const DifferentiableModel>;

ModelPtr make_model(diffnet::Network net);

/// Logit-averaging ensemble: fused logits = sum_k w_k * logits_k.
class EnsembleModel final : public DifferentiableModel {
 public:
  EnsembleModel(std::vector<ModelPtr> members, std::vector<double> weights);

  Linearization linearize(const Tensor& batch) const override;
  Tensor logits(const Tensor& batch) const override;
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return members_.size(); }

 private:
  std::vector<ModelPtr> members_;
  std::vector<double> weights_;
};

/// Weights must be nonnegative, sum to 1 (within 1e-9), and match the member count.
std::shared_ptr<const EnsembleModel> ensemble_oracle(std::vector<ModelPtr> members,
                                                     std::vector<double> weights);

/// Equal weights 1/n.
std::shared_ptr<const EnsembleModel> equal_ensemble(std::vector<ModelPtr> members);

}  // namespace tb::attacks
