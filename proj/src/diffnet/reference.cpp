#include <algorithm>
#include <cmath>

#include "reference.hpp"

namespace tb::diffnet::detail {

namespace {

using Real = long double;

std::vector<Real> layer_forward(const Layer& l, const std::vector<Real>& x) {
  const std::size_t ci_n = l.input.channels, h = l.input.height, w = l.input.width;
  std::vector<Real> y(l.output.size());
  switch (l.kind) {
    case LayerKind::Dense: {
      const std::size_t in = l.input.size();
      for (std::size_t o = 0; o < y.size(); ++o) {
        Real a = l.bias[o];
        for (std::size_t i = 0; i < in; ++i) a += static_cast<Real>(l.weight[o * in + i]) * x[i];
        y[o] = a;
      }
      break;
    }
    case LayerKind::Conv2d: {
      const auto k = static_cast<std::ptrdiff_t>(l.kernel), p = k / 2;
      const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
      for (std::size_t co = 0; co < l.output.channels; ++co)
        for (std::ptrdiff_t r = 0; r < hh; ++r)
          for (std::ptrdiff_t c = 0; c < ww; ++c) {
            Real a = l.bias[co];
            for (std::size_t ci = 0; ci < ci_n; ++ci)
              for (std::ptrdiff_t ky = 0; ky < k; ++ky)
                for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                  const std::ptrdiff_t yy = r + ky - p, xx = c + kx - p;
                  if (yy < 0 || yy >= hh || xx < 0 || xx >= ww) continue;
                  const double wv = l.weight[((co * ci_n + ci) * l.kernel + static_cast<std::size_t>(ky)) *
                                                 l.kernel +
                                             static_cast<std::size_t>(kx)];
                  a += static_cast<Real>(wv) * x[(ci * h + static_cast<std::size_t>(yy)) * w +
                                                  static_cast<std::size_t>(xx)];
                }
            y[(co * h + static_cast<std::size_t>(r)) * w + static_cast<std::size_t>(c)] = a;
          }
      break;
    }
    case LayerKind::AvgPool2: {
      const std::size_t oh = h / 2, ow = w / 2;
      for (std::size_t c = 0; c < ci_n; ++c)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            const Real* q = x.data() + (c * h + 2 * i) * w + 2 * j;
            y[(c * oh + i) * ow + j] = (q[0] + q[1] + q[w] + q[w + 1]) / 4;
          }
      break;
    }
    case LayerKind::Elu:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0 ? x[i] : std::expm1(x[i]);
      break;
  }
  return y;
}

}  // namespace

long double reference_loss(const Network& net, const Tensor& batch, std::span<const int> labels) {
  const std::size_t n = batch.dim(0), per = net.input_shape().size();
  Real total = 0;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<Real> a(batch.raw().begin() + static_cast<std::ptrdiff_t>(s * per),
                        batch.raw().begin() + static_cast<std::ptrdiff_t>((s + 1) * per));
    for (const auto& l : net.layers()) a = layer_forward(l, a);
    const Real m = *std::max_element(a.begin(), a.end());
    Real z = 0;
    for (Real v : a) z += std::exp(v - m);
    total += m + std::log(z) - a.at(static_cast<std::size_t>(labels[s]));
  }
  return total / static_cast<Real>(n);
}

}  // namespace tb::diffnet::detail
