#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tb/diffnet.hpp"
#include "tb/tensor.hpp"

namespace tb::data {

/// Labelled image set: N x C x H x W pixels in [0,1] and N labels in [0, K).
class Dataset {
 public:
  /// Throws ContractError when any invariant fails.
  Dataset(Tensor images, std::vector<int> labels, std::size_t class_count);

  const Tensor& images() const { return images_; }
  const std::vector<int>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t class_count() const { return class_count_; }
  diffnet::FeatureShape image_shape() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  /// First min(n, size()) samples.
  Dataset head(std::size_t n) const;

 private:
  Tensor images_;
  std::vector<int> labels_;
  std::size_t class_count_;
};

/// Checks an N x C x H x W batch with every pixel in [0,1].
void check_image_batch(const Tensor& batch);

// IDX ---------------------------------------------------------------------

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class IdxMagicError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxTruncatedError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxCountMismatchError : public IdxError {
 public:
  using IdxError::IdxError;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// N x 1 x H x W, byte / 255.
Tensor read_idx_images(const std::filesystem::path& path);
std::vector<int> read_idx_labels(const std::filesystem::path& path);

/// `class_count` 0 infers max(label) + 1.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, std::size_t class_count = 0);

/// Nearest byte of v * 255 after clamping to [0,1].
std::uint8_t quantize_pixel(double v);

/// Requires C == 1.
void write_idx_images(const std::filesystem::path& path, const Tensor& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels);
void save_idx(const Dataset& ds, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

// Exact 64-bit sidecar: "TBF641", u32 rank, u32 extents, f64 LE values.
void write_f64_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_f64_tensor(const std::filesystem::path& path);

// Generation and splitting --------------------------------------------------

/// Shape of the synthetic class templates and per-sample nuisance.
///
/// A sample is contrast * (background + template + noise), clamped to [0,1],
/// with the template shifted by up to max_shift pixels. Contrast is drawn
/// log-uniformly from [contrast_min, contrast_max].
struct SynthParams {
  /// Bumps common to every class; 0 disables the shared part.
  std::size_t shared_bumps = 4;
  std::size_t bumps_per_class = 3;
  /// Weight of the class-specific bumps relative to the shared part.
  double class_amplitude = 0.8;
  /// Bump widths as a fraction of the image side.
  double bump_sigma_min = 0.06;
  double bump_sigma_max = 0.12;
  double contrast_min = 0.06;
  double contrast_max = 0.5;
  double background_max = 0.2;
  double noise_stddev = 0.1;
  int max_shift = 1;
};

/// Seeded synthetic classification corpus. Label i is i mod K.
Dataset synth_blobs(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t side,
                    const SynthParams& params = {});

/// Seeded shuffle, then the first round(fraction * N) samples go to train.
std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed);

}  // namespace tb::data
