#include <algorithm>
#include <cmath>

#include "reference.hpp"
#include "tb/diffnet.hpp"

namespace tb::diffnet {

namespace {

void check_logits(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ContractError("cross_entropy: logits must be N x K");
  if (labels.size() != logits.dim(0))
    throw ContractError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(logits.dim(0)) + " samples");
  const auto k = static_cast<int>(logits.dim(1));
  for (int y : labels)
    if (y < 0 || y >= k)
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(k) + ")");
}

// -log softmax(z)[y] with the row maximum subtracted first.
double sample_loss(std::span<const double> z, int y, double* softmax_out) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  if (softmax_out)
    for (std::size_t j = 0; j < z.size(); ++j) softmax_out[j] = std::exp(z[j] - zmax) / sum;
  return std::log(sum) - (z[static_cast<std::size_t>(y)] - zmax);
}

}  // namespace

std::vector<double> cross_entropy_per_sample(const Tensor& logits, std::span<const int> labels) {
  check_logits(logits, labels);
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    out[i] = sample_loss(logits.row(i), labels[i], nullptr);
  return out;
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const auto per = cross_entropy_per_sample(logits, labels);
  double sum = 0.0;
  for (double v : per) sum += v;
  return sum / static_cast<double>(per.size());
}

std::pair<double, Tensor> cross_entropy_with_grad(const Tensor& logits,
                                                  std::span<const int> labels) {
  check_logits(logits, labels);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor grad(logits.shape());
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double* g = grad.row(i).data();
    sum += sample_loss(logits.row(i), labels[i], g);
    g[labels[i]] -= 1.0;
    for (std::size_t j = 0; j < k; ++j) g[j] *= inv_n;
  }
  return {sum * inv_n, std::move(grad)};
}

LossGrad input_gradient(const Network& net, const Tensor& batch, std::span<const int> labels) {
  Tape tape;
  const Tensor logits = net.forward(batch, tape);
  auto [loss, dlogits] = cross_entropy_with_grad(logits, labels);
  return {loss, net.backward(tape, dlogits)};
}

ParamLossGrad parameter_gradient(const Network& net, const Tensor& batch,
                                 std::span<const int> labels) {
  Tape tape;
  ParamLossGrad out;
  out.logits = net.forward(batch, tape);
  auto [loss, dlogits] = cross_entropy_with_grad(out.logits, labels);
  out.loss = loss;
  net.backward(tape, dlogits, &out.grads);
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ContractError("argmax_rows: logits must be N x K");
  std::vector<int> out(logits.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto r = logits.row(i);
    // max_element returns the first maximum, so ties go to the lowest index.
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

double finite_diff_check(const LossGradFn& fn, const Tensor& x, double h) {
  if (!(h > 0.0) || !std::isfinite(h))
    throw ContractError("finite_diff_check: step must be positive and finite");
  const LossGrad analytic = fn(x);
  require_same_shape(analytic.grad, x, "finite_diff_check");
  Tensor probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = fn(probe).loss;
    probe[i] = x[i] - h;
    const double down = fn(probe).loss;
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.grad[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

double finite_diff_check(const Network& net, const Tensor& batch, std::span<const int> labels,
                         double h) {
  if (!(h > 0.0) || !std::isfinite(h))
    throw ContractError("finite_diff_check: step must be positive and finite");
  const LossGrad analytic = input_gradient(net, batch, labels);
  // Central differences of the extended-precision loss keep the numeric side
  // well below double rounding on near-zero gradient coordinates.
  Tensor probe = batch;
  double worst = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    probe[i] = batch[i] + h;
    const long double up = detail::reference_loss(net, probe, labels);
    probe[i] = batch[i] - h;
    const long double down = detail::reference_loss(net, probe, labels);
    probe[i] = batch[i];
    const auto numeric = static_cast<double>((up - down) / (2.0L * h));
    const double a = analytic.grad[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace tb::diffnet
