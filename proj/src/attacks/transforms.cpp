#include <algorithm>
#include <cmath>

#include "tb/attacks.hpp"

namespace tb::attacks {

Tensor sign(const Tensor& t) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i)
    out[i] = t[i] > 0.0 ? 1.0 : (t[i] < 0.0 ? -1.0 : 0.0);
  return out;
}

Tensor project(const Tensor& x_adv, const Tensor& x, double eps) {
  require_same_shape(x_adv, x, "project");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = std::clamp(x_adv[i], x[i] - eps, x[i] + eps);
    out[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

Tensor nes_point(const Tensor& x_adv, const Tensor& g, double alpha, double mu) {
  require_same_shape(x_adv, g, "nes_point");
  Tensor out(x_adv.shape());
  const double jump = alpha * mu;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x_adv[i] + jump * g[i];
  return out;
}

Tensor scale_copy(const Tensor& x, int i) {
  if (i < 0) throw ContractError("scale_copy: index must be >= 0");
  Tensor out(x.shape());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = std::ldexp(x[j], -i);
  return out;
}

Tensor normalize_l1(const Tensor& g) {
  Tensor out = g;
  for (std::size_t s = 0; s < g.dim(0); ++s) {
    auto row = out.row(s);
    double l1 = 0.0;
    for (double v : row) l1 += std::abs(v);
    if (l1 < 1e-12) continue;
    for (double& v : row) v /= l1;
  }
  return out;
}

// Resize-and-pad ----------------------------------------------------------------

ResizePad ResizePad::draw(const Shape& batch_shape, double p, double min_ratio, Rng& rng) {
  if (batch_shape.size() != 4) throw ContractError("resize-pad expects N x C x H x W");
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("resize-pad probability must lie in [0,1]");
  if (!(min_ratio > 0.0 && min_ratio <= 1.0))
    throw ContractError("resize-pad min ratio must lie in (0,1]");
  ResizePad rp;
  rp.shape_ = batch_shape;
  const std::size_t h = batch_shape[2], w = batch_shape[3];
  // Guard against 0.85 * 20 landing a hair above 17.
  const auto lo = static_cast<std::int64_t>(
      std::ceil(min_ratio * static_cast<double>(h) - 1e-9));
  rp.placements_.resize(batch_shape[0]);
  for (auto& pl : rp.placements_) {
    if (!rng.bernoulli(p)) continue;
    pl.active = true;
    pl.rows = static_cast<std::size_t>(rng.integer(std::max<std::int64_t>(1, lo),
                                                   static_cast<std::int64_t>(h)));
    pl.cols = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(pl.rows * w) /
                                                 static_cast<double>(h))));
    pl.cols = std::min(pl.cols, w);
    pl.top = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(h - pl.rows)));
    pl.left = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(w - pl.cols)));
  }
  return rp;
}

Tensor ResizePad::apply(const Tensor& x) const {
  if (x.shape() != shape_) throw ContractError("resize-pad applied to a batch of another shape");
  const std::size_t c = shape_[1], h = shape_[2], w = shape_[3];
  Tensor out(shape_);
  for (std::size_t s = 0; s < shape_[0]; ++s) {
    const auto& pl = placements_[s];
    auto src = x.row(s);
    auto dst = out.row(s);
    if (!pl.active) {
      std::copy(src.begin(), src.end(), dst.begin());
      continue;
    }
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t r = 0; r < pl.rows; ++r) {
        const std::size_t sr = r * h / pl.rows;
        for (std::size_t q = 0; q < pl.cols; ++q) {
          const std::size_t sc = q * w / pl.cols;
          dst[(ch * h + pl.top + r) * w + pl.left + q] = src[(ch * h + sr) * w + sc];
        }
      }
  }
  return out;
}

Tensor ResizePad::pullback(const Tensor& g) const {
  if (g.shape() != shape_) throw ContractError("resize-pad pullback of a batch of another shape");
  const std::size_t c = shape_[1], h = shape_[2], w = shape_[3];
  Tensor out(shape_);
  for (std::size_t s = 0; s < shape_[0]; ++s) {
    const auto& pl = placements_[s];
    auto src = g.row(s);
    auto dst = out.row(s);
    if (!pl.active) {
      std::copy(src.begin(), src.end(), dst.begin());
      continue;
    }
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t r = 0; r < pl.rows; ++r) {
        const std::size_t sr = r * h / pl.rows;
        for (std::size_t q = 0; q < pl.cols; ++q) {
          const std::size_t sc = q * w / pl.cols;
          dst[(ch * h + sr) * w + sc] += src[(ch * h + pl.top + r) * w + pl.left + q];
        }
      }
  }
  return out;
}

Tensor dim_transform(const Tensor& x, double p, Rng& rng, double min_ratio) {
  return ResizePad::draw(x.shape(), p, min_ratio, rng).apply(x);
}

// Translation smoothing ----------------------------------------------------------

Kernel gaussian_kernel(int k, double sigma) {
  if (k < 1 || k % 2 == 0) throw ContractError("gaussian_kernel: size must be odd and positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ContractError("gaussian_kernel: sigma must be > 0");
  Kernel out;
  out.size = static_cast<std::size_t>(k);
  out.weights.resize(out.size * out.size);
  const int c = k / 2;
  double sum = 0.0;
  for (int r = 0; r < k; ++r)
    for (int q = 0; q < k; ++q) {
      const double d2 = static_cast<double>((r - c) * (r - c) + (q - c) * (q - c));
      const double v = std::exp(-d2 / (2.0 * sigma * sigma));
      out.weights[static_cast<std::size_t>(r * k + q)] = v;
      sum += v;
    }
  for (double& v : out.weights) v /= sum;
  return out;
}

Tensor ti_smooth(const Tensor& grad, const Kernel& w) {
  if (grad.rank() != 4) throw ContractError("ti_smooth expects N x C x H x W");
  if (w.size % 2 == 0 || w.weights.size() != w.size * w.size)
    throw ContractError("ti_smooth: malformed kernel");
  const std::size_t planes = grad.dim(0) * grad.dim(1), h = grad.dim(2), wd = grad.dim(3);
  const auto k = static_cast<std::ptrdiff_t>(w.size), c = k / 2;
  const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(wd);
  Tensor out(grad.shape());
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* g = grad.raw().data() + pl * h * wd;
    double* o = out.raw().data() + pl * h * wd;
    for (std::ptrdiff_t y = 0; y < H; ++y)
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        double acc = 0.0;
        // out(y, x) = sum_{a,b} W(a, b) * g(y - (a - c), x - (b - c))
        for (std::ptrdiff_t a = 0; a < k; ++a) {
          const std::ptrdiff_t sy = y - (a - c);
          if (sy < 0 || sy >= H) continue;
          for (std::ptrdiff_t b = 0; b < k; ++b) {
            const std::ptrdiff_t sx = x - (b - c);
            if (sx < 0 || sx >= W) continue;
            acc += w.weights[static_cast<std::size_t>(a * k + b)] * g[sy * W + sx];
          }
        }
        o[y * W + x] = acc;
      }
  }
  return out;
}

}  // namespace tb::attacks
