#include <cmath>

#include "tb/oracle.hpp"

namespace tb::attacks {

std::vector<int> DifferentiableModel::predict(const Tensor& batch) const {
  return diffnet::argmax_rows(logits(batch));
}

LossGrad DifferentiableModel::evaluate(const Tensor& batch, std::span<const int> labels) const {
  auto lin = linearize(batch);
  auto [loss, dlogits] = diffnet::cross_entropy_with_grad(lin.logits, labels);
  return {loss, lin.pullback(dlogits)};
}

NetworkModel::NetworkModel(std::shared_ptr<const diffnet::Network> net) : net_(std::move(net)) {
  if (!net_) throw ContractError("NetworkModel needs a network");
}

Linearization NetworkModel::linearize(const Tensor& batch) const {
  auto tape = std::make_shared<diffnet::Tape>();
  Tensor logits = net_->forward(batch, *tape);
  auto net = net_;
  return {std::move(logits),
          [net, tape](const Tensor& dlogits) { return net->backward(*tape, dlogits); }};
}

Tensor NetworkModel::logits(const Tensor& batch) const { return net_->forward(batch); }

ModelPtr make_model(diffnet::Network net) {
  return std::make_shared<NetworkModel>(
      std::make_shared<const diffnet::Network>(std::move(net)));
}

EnsembleModel::EnsembleModel(std::vector<ModelPtr> members, std::vector<double> weights)
    : members_(std::move(members)), weights_(std::move(weights)) {
  if (members_.empty()) throw ContractError("ensemble needs at least one member");
  if (weights_.size() != members_.size())
    throw ContractError("ensemble has " + std::to_string(members_.size()) + " members but " +
                        std::to_string(weights_.size()) + " weights");
  double sum = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (!members_[i]) throw ContractError("ensemble member is null");
    if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i]))
      throw ContractError("ensemble weights must be nonnegative");
    sum += weights_[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ContractError("ensemble weights must sum to 1");
}

Linearization EnsembleModel::linearize(const Tensor& batch) const {
  std::vector<Linearization> parts;
  parts.reserve(members_.size());
  for (const auto& m : members_) parts.push_back(m->linearize(batch));
  Tensor fused(parts.front().logits.shape());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    require_same_shape(fused, parts[k].logits, "ensemble member logits");
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += weights_[k] * parts[k].logits[i];
  }
  auto shared = std::make_shared<std::vector<Linearization>>(std::move(parts));
  auto weights = weights_;
  return {std::move(fused), [shared, weights](const Tensor& dlogits) {
            Tensor total;
            for (std::size_t k = 0; k < shared->size(); ++k) {
              Tensor scaled = dlogits;
              for (double& v : scaled.raw()) v *= weights[k];
              Tensor g = (*shared)[k].pullback(scaled);
              if (k == 0) {
                total = std::move(g);
              } else {
                for (std::size_t i = 0; i < total.size(); ++i) total[i] += g[i];
              }
            }
            return total;
          }};
}

Tensor EnsembleModel::logits(const Tensor& batch) const {
  Tensor fused;
  for (std::size_t k = 0; k < members_.size(); ++k) {
    Tensor l = members_[k]->logits(batch);
    if (k == 0) fused = Tensor(l.shape());
    require_same_shape(fused, l, "ensemble member logits");
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += weights_[k] * l[i];
  }
  return fused;
}

std::shared_ptr<const EnsembleModel> ensemble_oracle(std::vector<ModelPtr> members,
                                                     std::vector<double> weights) {
  return std::make_shared<const EnsembleModel>(std::move(members), std::move(weights));
}

std::shared_ptr<const EnsembleModel> equal_ensemble(std::vector<ModelPtr> members) {
  std::vector<double> w(members.size(), members.empty() ? 0.0 : 1.0 / static_cast<double>(members.size()));
  return ensemble_oracle(std::move(members), std::move(w));
}

}  // namespace tb::attacks
