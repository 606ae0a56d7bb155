#include <cmath>

#include "tb/diffnet.hpp"
#include "tb/rng.hpp"

namespace tb::diffnet {

void init_weights(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto* p : net.parameters()) {
    // Biases are 1-D; weights carry [out, in, ...].
    if (p->rank() == 1) {
      std::fill(p->raw().begin(), p->raw().end(), 0.0);
      continue;
    }
    const std::size_t receptive = p->size() / (p->dim(0) * p->dim(1));
    const double fan_in = static_cast<double>(p->dim(1) * receptive);
    const double fan_out = static_cast<double>(p->dim(0) * receptive);
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : p->raw()) v = rng.uniform(-s, s);
  }
}

const std::vector<std::string>& architecture_names() {
  static const std::vector<std::string> names = {"linear", "mlp", "cnn_a", "cnn_b"};
  return names;
}

Network build_architecture(const std::string& name, FeatureShape input, std::size_t classes,
                           std::uint64_t seed) {
  std::vector<Layer> layers;
  auto push = [&layers](Layer l) { layers.push_back(std::move(l)); };
  auto last = [&layers, &input]() { return layers.empty() ? input : layers.back().output; };

  if (name == "linear") {
    push(dense(input, classes));
  } else if (name == "mlp") {
    push(dense(input, 64));
    push(elu(last()));
    push(dense(last(), classes));
  } else if (name == "cnn_a") {
    push(conv2d(input, 8, 3));
    push(elu(last()));
    push(avg_pool2(last()));
    push(conv2d(last(), 16, 3));
    push(elu(last()));
    push(avg_pool2(last()));
    push(dense(last(), classes));
  } else if (name == "cnn_b") {
    push(conv2d(input, 6, 5));
    push(elu(last()));
    push(avg_pool2(last()));
    push(dense(last(), 32));
    push(elu(last()));
    push(dense(last(), classes));
  } else {
    throw ContractError("unknown architecture '" + name + "'");
  }
  Network net(std::move(layers));
  init_weights(net, seed);
  return net;
}

}  // namespace tb::diffnet
