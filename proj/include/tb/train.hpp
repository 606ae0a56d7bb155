#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tb/attacks.hpp"
#include "tb/data.hpp"
#include "tb/diffnet.hpp"

namespace tb::train {

struct TrainConfig {
  int epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  void apply_kv(const std::map<std::string, std::string>& kv);
};

/// One velocity tensor per network parameter tensor.
struct OptimizerState {
  std::vector<Tensor> velocity;

  static OptimizerState zeros_like(const diffnet::Network& net);
};

/// Nesterov update given the gradient already evaluated at the lookahead point
/// params - lr * mu * velocity:
///   velocity' = mu * velocity + grad
///   params'   = params - lr * velocity'
/// Updates `params` and `velocity` in place.
void nag_step(std::span<Tensor* const> params, std::vector<Tensor>& velocity,
              std::span<const Tensor> grad_at_lookahead, double lr, double mu);

/// Scalar form of the same update.
struct ScalarNag {
  double param;
  double velocity;
};
ScalarNag nag_step(double param, double velocity, double grad_at_lookahead, double lr, double mu);

struct TrainResult {
  diffnet::Network net;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

/// Mean loss and accuracy of `net` over `ds`, evaluated in chunks.
std::pair<double, double> evaluate(const diffnet::Network& net, const data::Dataset& ds);

TrainResult train(diffnet::Network net, const data::Dataset& ds, const TrainConfig& cfg);

/// Inner PGD settings used while adversarially training at budget `epsilon`:
/// 7 steps, step epsilon / 4, fresh random start per minibatch.
attacks::AttackConfig inner_pgd_config(double epsilon);

/// Every minibatch is replaced by PGD examples crafted on the current
/// parameters before the Nesterov step.
TrainResult adversarial_train(diffnet::Network net, const data::Dataset& ds,
                              const TrainConfig& cfg, const attacks::AttackConfig& attack_cfg);

}  // namespace tb::train
