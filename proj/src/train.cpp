#include "tb/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tb/kv.hpp"
#include "tb/rng.hpp"

namespace tb::train {

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw ContractError("train config: " + why); };
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0,1)");
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  return {{"train.epochs", std::to_string(epochs)},
          {"train.batch_size", std::to_string(batch_size)},
          {"train.learning_rate", kv::format_real(learning_rate)},
          {"train.momentum", kv::format_real(momentum)},
          {"train.seed", std::to_string(seed)}};
}

void TrainConfig::apply_kv(const std::map<std::string, std::string>& map) {
  auto get = [&map](const char* key) -> const std::string* {
    auto it = map.find(key);
    return it == map.end() ? nullptr : &it->second;
  };
  if (auto* v = get("train.epochs")) epochs = static_cast<int>(kv::parse_int(*v, "train.epochs"));
  if (auto* v = get("train.batch_size")) batch_size = kv::parse_uint(*v, "train.batch_size");
  if (auto* v = get("train.learning_rate"))
    learning_rate = kv::parse_real(*v, "train.learning_rate");
  if (auto* v = get("train.momentum")) momentum = kv::parse_real(*v, "train.momentum");
  if (auto* v = get("train.seed")) seed = kv::parse_uint(*v, "train.seed");
}

OptimizerState OptimizerState::zeros_like(const diffnet::Network& net) {
  OptimizerState s;
  for (const Tensor* p : net.parameters()) s.velocity.emplace_back(p->shape());
  return s;
}

void nag_step(std::span<Tensor* const> params, std::vector<Tensor>& velocity,
              std::span<const Tensor> grad_at_lookahead, double lr, double mu) {
  if (params.size() != velocity.size() || params.size() != grad_at_lookahead.size())
    throw ContractError("nag_step: parameter, velocity and gradient counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    Tensor& v = velocity[k];
    const Tensor& g = grad_at_lookahead[k];
    require_same_shape(p, v, "nag_step velocity");
    require_same_shape(p, g, "nag_step gradient");
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = mu * v[i] + g[i];
      p[i] = p[i] - lr * v[i];
    }
  }
}

ScalarNag nag_step(double param, double velocity, double grad_at_lookahead, double lr, double mu) {
  const double v = mu * velocity + grad_at_lookahead;
  return {param - lr * v, v};
}

std::pair<double, double> evaluate(const diffnet::Network& net, const data::Dataset& ds) {
  constexpr std::size_t chunk = 256;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < ds.size(); b += chunk) {
    const std::size_t e = std::min(ds.size(), b + chunk);
    const Tensor logits = net.forward(ds.images().rows(b, e));
    std::span<const int> y(ds.labels().data() + b, e - b);
    for (double v : diffnet::cross_entropy_per_sample(logits, y)) loss += v;
    const auto pred = diffnet::argmax_rows(logits);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == y[i];
  }
  const auto n = static_cast<double>(ds.size());
  return {loss / n, static_cast<double>(correct) / n};
}

attacks::AttackConfig inner_pgd_config(double epsilon) {
  attacks::AttackConfig c;
  c.epsilon = epsilon;
  c.steps = 7;
  c.step_size = epsilon > 0.0 ? std::optional<double>(epsilon / 4.0) : std::nullopt;
  return c;
}

namespace {

// Shared loop; `perturb` may replace each minibatch before the update.
template <typename Perturb>
TrainResult run(diffnet::Network net, const data::Dataset& ds, const TrainConfig& cfg,
                Perturb&& perturb) {
  cfg.validate();
  if (ds.size() == 0) throw ContractError("train: empty dataset");
  TrainResult result{net, 0.0, 0.0, 0.0};
  result.initial_loss = evaluate(net, ds).first;

  OptimizerState state = OptimizerState::zeros_like(net);
  Rng shuffle_rng(derive_seed(cfg.seed, {0x5348}));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double lr = cfg.learning_rate, mu = cfg.momentum;
  std::uint64_t batch_counter = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + b, e - b);
      Tensor x = gather_rows(ds.images(), idx);
      std::vector<int> y;
      y.reserve(idx.size());
      for (auto i : idx) y.push_back(ds.labels()[i]);
      x = perturb(net, x, y, batch_counter++);

      // Gradient at the lookahead point theta - lr * mu * v.
      diffnet::Network ahead = net;
      auto ahead_params = ahead.parameters();
      for (std::size_t k = 0; k < ahead_params.size(); ++k)
        for (std::size_t i = 0; i < ahead_params[k]->size(); ++i)
          (*ahead_params[k])[i] -= lr * mu * state.velocity[k][i];
      const auto pg = diffnet::parameter_gradient(ahead, x, y);

      auto params = net.parameters();
      nag_step(params, state.velocity, pg.grads, lr, mu);
    }
  }
  const auto [loss, acc] = evaluate(net, ds);
  result.final_loss = loss;
  result.train_accuracy = acc;
  result.net = std::move(net);
  return result;
}

}  // namespace

TrainResult train(diffnet::Network net, const data::Dataset& ds, const TrainConfig& cfg) {
  return run(std::move(net), ds, cfg,
             [](const diffnet::Network&, const Tensor& x, const std::vector<int>&, std::uint64_t) {
               return x;
             });
}

TrainResult adversarial_train(diffnet::Network net, const data::Dataset& ds,
                              const TrainConfig& cfg, const attacks::AttackConfig& attack_cfg) {
  attack_cfg.validate();
  const attacks::AttackConfig inner = inner_pgd_config(attack_cfg.epsilon);
  const std::uint64_t pgd_seed = derive_seed(cfg.seed, {0x504744, attack_cfg.seed});
  return run(std::move(net), ds, cfg,
             [&](const diffnet::Network& current, const Tensor& x, const std::vector<int>& y,
                 std::uint64_t batch) {
               attacks::NetworkModel oracle(std::make_shared<const diffnet::Network>(current));
               Rng rng(derive_seed(pgd_seed, {batch}));
               return attacks::pgd(oracle, x, y, inner, rng);
             });
}

}  // namespace tb::train
