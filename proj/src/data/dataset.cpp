#include <algorithm>
#include <cmath>
#include <numeric>

#include "tb/data.hpp"
#include "tb/rng.hpp"

namespace tb::data {

void check_image_batch(const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(0) < 1)
    throw ContractError("image batch must be N x C x H x W with N >= 1, got " +
                        shape_string(batch.shape()));
  for (double v : batch.raw())
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("image batch pixel outside [0,1]");
}

Dataset::Dataset(Tensor images, std::vector<int> labels, std::size_t class_count)
    : images_(std::move(images)), labels_(std::move(labels)), class_count_(class_count) {
  check_image_batch(images_);
  if (labels_.size() != images_.dim(0))
    throw ContractError("dataset has " + std::to_string(images_.dim(0)) + " images but " +
                        std::to_string(labels_.size()) + " labels");
  if (class_count_ == 0) throw ContractError("dataset class count must be positive");
  for (int y : labels_)
    if (y < 0 || static_cast<std::size_t>(y) >= class_count_)
      throw ContractError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(class_count_) + ")");
}

diffnet::FeatureShape Dataset::image_shape() const {
  return {images_.dim(1), images_.dim(2), images_.dim(3)};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<int> y;
  y.reserve(indices.size());
  for (auto i : indices) y.push_back(labels_.at(i));
  return Dataset(gather_rows(images_, indices), std::move(y), class_count_);
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(idx);
}

namespace {

struct Bump {
  double cy, cx, sigma, amplitude;
};

/// Sum of `count` random Gaussian bumps, scaled to peak at 1.
std::vector<double> bump_field(std::size_t count, std::size_t side, double min_sigma,
                               double max_sigma, Rng& rng) {
  const double s = static_cast<double>(side);
  std::vector<Bump> bumps(count);
  for (auto& b : bumps) {
    b.cy = rng.uniform(0.15 * s, 0.85 * s);
    b.cx = rng.uniform(0.15 * s, 0.85 * s);
    b.sigma = rng.uniform(min_sigma * s, max_sigma * s);
    b.amplitude = rng.uniform(0.5, 1.0);
  }
  std::vector<double> field(side * side, 0.0);
  double peak = 0.0;
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      double v = 0.0;
      for (const auto& b : bumps) {
        const double dy = static_cast<double>(y) - b.cy, dx = static_cast<double>(x) - b.cx;
        v += b.amplitude * std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
      }
      field[y * side + x] = v;
      peak = std::max(peak, v);
    }
  if (peak > 0.0)
    for (double& v : field) v /= peak;
  return field;
}

void check_params(const SynthParams& p) {
  if (!(p.contrast_min > 0.0 && p.contrast_min <= p.contrast_max))
    throw ContractError("synth_blobs: need 0 < contrast_min <= contrast_max");
  if (!(p.background_max >= 0.0) || !(p.noise_stddev >= 0.0) || !(p.class_amplitude > 0.0))
    throw ContractError("synth_blobs: background, noise and class amplitude must be nonnegative");
  if (p.bumps_per_class == 0) throw ContractError("synth_blobs: need at least one bump per class");
  if (p.max_shift < 0) throw ContractError("synth_blobs: max_shift must be nonnegative");
}

}  // namespace

Dataset synth_blobs(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t side,
                    const SynthParams& params) {
  if (classes == 0) throw ContractError("synth_blobs: need at least one class");
  if (n < classes)
    throw ContractError("synth_blobs: n (" + std::to_string(n) + ") must be at least K (" +
                        std::to_string(classes) + ")");
  if (side < 8) throw ContractError("synth_blobs: side must be at least 8");
  check_params(params);

  // Template = shared structure + class_amplitude * class-specific bumps.
  Rng template_rng(derive_seed(seed, {1}));
  const auto shared = bump_field(params.shared_bumps, side, 0.12, 0.25, template_rng);
  std::vector<std::vector<double>> templates(classes);
  for (auto& tpl : templates) {
    tpl = bump_field(params.bumps_per_class, side, params.bump_sigma_min, params.bump_sigma_max,
                     template_rng);
    for (std::size_t i = 0; i < tpl.size(); ++i)
      tpl[i] = (params.shared_bumps ? shared[i] : 0.0) + params.class_amplitude * tpl[i];
  }

  Rng sample_rng(derive_seed(seed, {2}));
  std::vector<double> px(n * side * side);
  std::vector<int> labels(n);
  const auto ss = static_cast<std::int64_t>(side);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % classes);
    labels[i] = y;
    const double contrast = std::exp(
        sample_rng.uniform(std::log(params.contrast_min), std::log(params.contrast_max)));
    const double background = sample_rng.uniform(0.0, params.background_max);
    const auto sy = sample_rng.integer(-params.max_shift, params.max_shift);
    const auto sx = sample_rng.integer(-params.max_shift, params.max_shift);
    const auto& tpl = templates[static_cast<std::size_t>(y)];
    double* out = px.data() + i * side * side;
    for (std::int64_t r = 0; r < ss; ++r)
      for (std::int64_t c = 0; c < ss; ++c) {
        const std::int64_t tr = r - sy, tc = c - sx;
        const double t = (tr >= 0 && tr < ss && tc >= 0 && tc < ss)
                             ? tpl[static_cast<std::size_t>(tr * ss + tc)]
                             : 0.0;
        const double v =
            contrast * (background + t + sample_rng.normal(0.0, params.noise_stddev));
        out[r * ss + c] = std::clamp(v, 0.0, 1.0);
      }
  }
  return Dataset(Tensor({n, 1, side, side}, std::move(px)), std::move(labels), classes);
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ContractError("split: fraction must lie strictly between 0 and 1");
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  if (n_train == 0 || n_train == ds.size())
    throw ContractError("split: fraction leaves one side empty");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  std::span<const std::size_t> all(idx);
  return {ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))};
}

}  // namespace tb::data
