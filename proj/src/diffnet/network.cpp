#include <algorithm>
#include <cmath>
#include <sstream>

#include "tb/diffnet.hpp"

namespace tb::diffnet {

std::string FeatureShape::str() const {
  std::ostringstream os;
  os << channels << 'x' << height << 'x' << width;
  return os.str();
}

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::AvgPool2: return "avgpool2";
    case LayerKind::Elu: return "elu";
  }
  return "unknown";
}

Layer dense(FeatureShape input, std::size_t out) {
  if (input.size() == 0 || out == 0) throw ContractError("dense: extents must be positive");
  Layer l;
  l.kind = LayerKind::Dense;
  l.input = input;
  l.output = {out, 1, 1};
  l.weight = Tensor({out, input.size()});
  l.bias = Tensor({out});
  return l;
}

Layer conv2d(FeatureShape input, std::size_t out_channels, std::size_t kernel) {
  if (input.size() == 0 || out_channels == 0) throw ContractError("conv2d: extents must be positive");
  if (kernel % 2 == 0) throw ContractError("conv2d: kernel size must be odd");
  Layer l;
  l.kind = LayerKind::Conv2d;
  l.input = input;
  l.output = {out_channels, input.height, input.width};
  l.kernel = kernel;
  l.weight = Tensor({out_channels, input.channels, kernel, kernel});
  l.bias = Tensor({out_channels});
  return l;
}

Layer avg_pool2(FeatureShape input) {
  if (input.size() == 0 || input.height % 2 || input.width % 2)
    throw ContractError("avgpool2: spatial extents must be even, got " + input.str());
  Layer l;
  l.kind = LayerKind::AvgPool2;
  l.input = input;
  l.output = {input.channels, input.height / 2, input.width / 2};
  return l;
}

Layer elu(FeatureShape input) {
  if (input.size() == 0) throw ContractError("elu: extents must be positive");
  Layer l;
  l.kind = LayerKind::Elu;
  l.input = input;
  l.output = input;
  return l;
}

namespace {

std::string layer_label(std::size_t index, const Layer& l) {
  return "layer " + std::to_string(index) + " (" + layer_kind_name(l.kind) + ")";
}

void check_layer_params(std::size_t index, const Layer& l) {
  auto fail = [&](const std::string& why) {
    throw ContractError(layer_label(index, l) + ": " + why);
  };
  switch (l.kind) {
    case LayerKind::Dense:
      if (l.output.height != 1 || l.output.width != 1) fail("dense output must be K x 1 x 1");
      if (l.weight.shape() != Shape{l.output.channels, l.input.size()}) fail("weight shape");
      if (l.bias.shape() != Shape{l.output.channels}) fail("bias shape");
      break;
    case LayerKind::Conv2d:
      if (l.kernel % 2 == 0) fail("kernel size must be odd");
      if (l.output.height != l.input.height || l.output.width != l.input.width)
        fail("conv2d preserves spatial extents");
      if (l.weight.shape() !=
          Shape{l.output.channels, l.input.channels, l.kernel, l.kernel})
        fail("weight shape");
      if (l.bias.shape() != Shape{l.output.channels}) fail("bias shape");
      break;
    case LayerKind::AvgPool2:
      if (l.input.height % 2 || l.input.width % 2) fail("spatial extents must be even");
      if (l.output != FeatureShape{l.input.channels, l.input.height / 2, l.input.width / 2})
        fail("output shape");
      break;
    case LayerKind::Elu:
      if (l.output != l.input) fail("output shape");
      break;
    default:
      fail("unknown layer kind");
  }
}

// Each routine maps an N x (input) activation to N x (output).

void dense_forward(const Layer& l, const double* in, double* out, std::size_t n) {
  const std::size_t d = l.input.size(), o = l.output.channels;
  const double* w = l.weight.raw().data();
  const double* b = l.bias.raw().data();
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = in + s * d;
    double* y = out + s * o;
    for (std::size_t j = 0; j < o; ++j) {
      const double* wj = w + j * d;
      double acc = b[j];
      for (std::size_t i = 0; i < d; ++i) acc += wj[i] * x[i];
      y[j] = acc;
    }
  }
}

void dense_backward(const Layer& l, const double* in, const double* dout, double* din,
                    double* dw, double* db, std::size_t n) {
  const std::size_t d = l.input.size(), o = l.output.channels;
  const double* w = l.weight.raw().data();
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = in + s * d;
    const double* g = dout + s * o;
    double* dx = din + s * d;
    std::fill(dx, dx + d, 0.0);
    for (std::size_t j = 0; j < o; ++j) {
      const double gj = g[j];
      const double* wj = w + j * d;
      for (std::size_t i = 0; i < d; ++i) dx[i] += wj[i] * gj;
      if (dw) {
        double* dwj = dw + j * d;
        for (std::size_t i = 0; i < d; ++i) dwj[i] += gj * x[i];
        db[j] += gj;
      }
    }
  }
}

// Valid output rows for kernel offset k with padding p: y + k - p in [0, extent).
struct Span1D {
  std::size_t lo, hi;
};
Span1D valid_range(std::size_t k, std::size_t p, std::size_t extent) {
  const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(p);
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
  const std::ptrdiff_t hi =
      std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(extent),
                               static_cast<std::ptrdiff_t>(extent) - shift);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void conv_forward(const Layer& l, const double* in, double* out, std::size_t n) {
  const std::size_t ci_n = l.input.channels, co_n = l.output.channels;
  const std::size_t h = l.input.height, wd = l.input.width, k = l.kernel, p = k / 2;
  const std::size_t plane = h * wd;
  const double* w = l.weight.raw().data();
  const double* b = l.bias.raw().data();
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = in + s * ci_n * plane;
    double* y = out + s * co_n * plane;
    for (std::size_t co = 0; co < co_n; ++co) {
      double* yo = y + co * plane;
      std::fill(yo, yo + plane, b[co]);
      for (std::size_t ci = 0; ci < ci_n; ++ci) {
        const double* xi = x + ci * plane;
        const double* wk = w + (co * ci_n + ci) * k * k;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const auto ry = valid_range(ky, p, h);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto rx = valid_range(kx, p, wd);
            const double wv = wk[ky * k + kx];
            for (std::size_t yy = ry.lo; yy < ry.hi; ++yy) {
              const double* src = xi + (yy + ky - p) * wd;
              double* dst = yo + yy * wd;
              for (std::size_t xx = rx.lo; xx < rx.hi; ++xx) dst[xx] += wv * src[xx + kx - p];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const Layer& l, const double* in, const double* dout, double* din,
                   double* dw, double* db, std::size_t n) {
  const std::size_t ci_n = l.input.channels, co_n = l.output.channels;
  const std::size_t h = l.input.height, wd = l.input.width, k = l.kernel, p = k / 2;
  const std::size_t plane = h * wd;
  const double* w = l.weight.raw().data();
  std::fill(din, din + n * ci_n * plane, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = in + s * ci_n * plane;
    const double* g = dout + s * co_n * plane;
    double* dx = din + s * ci_n * plane;
    for (std::size_t co = 0; co < co_n; ++co) {
      const double* go = g + co * plane;
      if (db) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += go[i];
        db[co] += acc;
      }
      for (std::size_t ci = 0; ci < ci_n; ++ci) {
        const double* xi = x + ci * plane;
        double* dxi = dx + ci * plane;
        const double* wk = w + (co * ci_n + ci) * k * k;
        double* dwk = dw ? dw + (co * ci_n + ci) * k * k : nullptr;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const auto ry = valid_range(ky, p, h);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto rx = valid_range(kx, p, wd);
            const double wv = wk[ky * k + kx];
            double wacc = 0.0;
            for (std::size_t yy = ry.lo; yy < ry.hi; ++yy) {
              const std::size_t row = (yy + ky - p) * wd;
              const double* gy = go + yy * wd;
              double* dst = dxi + row;
              const double* src = xi + row;
              for (std::size_t xx = rx.lo; xx < rx.hi; ++xx) {
                const std::size_t ix = xx + kx - p;
                dst[ix] += wv * gy[xx];
                wacc += src[ix] * gy[xx];
              }
            }
            if (dwk) dwk[ky * k + kx] += wacc;
          }
        }
      }
    }
  }
}

void pool_forward(const Layer& l, const double* in, double* out, std::size_t n) {
  const std::size_t c = l.input.channels, h = l.input.height, w = l.input.width;
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t s = 0; s < n * c; ++s) {
    const double* x = in + s * h * w;
    double* y = out + s * oh * ow;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const double* q = x + 2 * i * w + 2 * j;
        y[i * ow + j] = 0.25 * (q[0] + q[1] + q[w] + q[w + 1]);
      }
  }
}

void pool_backward(const Layer& l, const double* dout, double* din, std::size_t n) {
  const std::size_t c = l.input.channels, h = l.input.height, w = l.input.width;
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t s = 0; s < n * c; ++s) {
    const double* g = dout + s * oh * ow;
    double* dx = din + s * h * w;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const double v = 0.25 * g[i * ow + j];
        double* q = dx + 2 * i * w + 2 * j;
        q[0] = v;
        q[1] = v;
        q[w] = v;
        q[w + 1] = v;
      }
  }
}

void elu_forward(const double* in, double* out, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) out[i] = in[i] > 0.0 ? in[i] : std::expm1(in[i]);
}

void elu_backward(const double* in, const double* dout, double* din, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i)
    din[i] = in[i] > 0.0 ? dout[i] : dout[i] * std::exp(in[i]);
}

Shape batch_shape(std::size_t n, const FeatureShape& f) {
  return {n, f.channels, f.height, f.width};
}

}  // namespace

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ContractError("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    check_layer_params(i, layers_[i]);
    if (i > 0 && layers_[i].input != layers_[i - 1].output)
      throw ContractError(layer_label(i, layers_[i]) + " expects input " +
                          layers_[i].input.str() + " but previous layer emits " +
                          layers_[i - 1].output.str());
  }
  const auto& out = layers_.back().output;
  if (out.height != 1 || out.width != 1)
    throw ContractError("final layer must emit K x 1 x 1 class scores, got " + out.str());
}

void Network::check_batch(const Tensor& batch) const {
  const auto& in = input_shape();
  const bool ok = batch.rank() == 4 && batch.dim(1) == in.channels && batch.dim(2) == in.height &&
                  batch.dim(3) == in.width;
  if (!ok)
    throw ContractError(layer_label(0, layers_.front()) + " expects N x " + in.str() +
                        " input, got " + shape_string(batch.shape()));
}

Tensor Network::forward(const Tensor& batch) const {
  Tape tape;
  return forward(batch, tape);
}

Tensor Network::forward(const Tensor& batch, Tape& tape) const {
  check_batch(batch);
  const std::size_t n = batch.dim(0);
  tape.activations.clear();
  tape.activations.reserve(layers_.size());
  tape.activations.push_back(batch);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const double* in = tape.activations.back().raw().data();
    Tensor out(batch_shape(n, l.output));
    double* o = out.raw().data();
    switch (l.kind) {
      case LayerKind::Dense: dense_forward(l, in, o, n); break;
      case LayerKind::Conv2d: conv_forward(l, in, o, n); break;
      case LayerKind::AvgPool2: pool_forward(l, in, o, n); break;
      case LayerKind::Elu: elu_forward(in, o, out.size()); break;
    }
    if (i + 1 == layers_.size()) return out.reshaped({n, class_count()});
    tape.activations.push_back(std::move(out));
  }
  return {};
}

Tensor Network::backward(const Tape& tape, const Tensor& dlogits,
                         std::vector<Tensor>* param_grads) const {
  if (tape.activations.size() != layers_.size())
    throw ContractError("backward: tape does not belong to this network");
  const std::size_t n = tape.activations.front().dim(0);
  if (dlogits.shape() != Shape{n, class_count()})
    throw ContractError("backward: dlogits must be " + shape_string({n, class_count()}));

  std::vector<Tensor*> pg_slots;
  if (param_grads) {
    param_grads->clear();
    for (const Tensor* p : parameters()) param_grads->emplace_back(p->shape());
    for (auto& t : *param_grads) pg_slots.push_back(&t);
  }
  // Parameter slots are consumed from the back as layers unwind.
  std::size_t slot = pg_slots.size();

  Tensor grad = dlogits.reshaped(batch_shape(n, layers_.back().output));
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    const Layer& l = layers_[idx];
    const Tensor& in = tape.activations[idx];
    Tensor din(batch_shape(n, l.input));
    double* dw = nullptr;
    double* db = nullptr;
    if (param_grads && l.has_params()) {
      slot -= 2;
      dw = pg_slots[slot]->raw().data();
      db = pg_slots[slot + 1]->raw().data();
    }
    switch (l.kind) {
      case LayerKind::Dense:
        dense_backward(l, in.raw().data(), grad.raw().data(), din.raw().data(), dw, db, n);
        break;
      case LayerKind::Conv2d:
        conv_backward(l, in.raw().data(), grad.raw().data(), din.raw().data(), dw, db, n);
        break;
      case LayerKind::AvgPool2:
        pool_backward(l, grad.raw().data(), din.raw().data(), n);
        break;
      case LayerKind::Elu:
        elu_backward(in.raw().data(), grad.raw().data(), din.raw().data(), din.size());
        break;
    }
    grad = std::move(din);
  }
  return grad;
}

std::vector<const Tensor*> Network::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_)
    if (l.has_params()) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  return out;
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    if (l.has_params()) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  return out;
}

bool Network::operator==(const Network& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.kind != b.kind || a.input != b.input || a.output != b.output || a.kernel != b.kernel ||
        !bitwise_equal(a.weight, b.weight) || !bitwise_equal(a.bias, b.bias))
      return false;
  }
  return true;
}

}  // namespace tb::diffnet
