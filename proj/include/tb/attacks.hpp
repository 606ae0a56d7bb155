#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tb/oracle.hpp"
#include "tb/rng.hpp"
#include "tb/tensor.hpp"

namespace tb::attacks {

/// Every attack hyperparameter, in pixel units on [0,1] images.
struct AttackConfig {
  double epsilon = 16.0 / 255.0;
  int steps = 16;
  /// Unset means epsilon / steps.
  std::optional<double> step_size;
  double decay = 1.0;
  int scale_copies = 5;
  double dim_probability = 0.5;
  /// Smallest resize target as a fraction of the image side.
  double dim_min_ratio = 0.85;
  int kernel_size = 7;
  /// Unset means kernel_size / 3.
  std::optional<double> kernel_sigma;
  std::uint64_t seed = 0;

  double alpha() const { return step_size ? *step_size : epsilon / steps; }
  double sigma() const { return kernel_sigma ? *kernel_sigma : kernel_size / 3.0; }

  /// Throws ContractError on the first violated invariant.
  void validate() const;

  /// Flat key/value view with every field resolved (no defaults omitted).
  std::map<std::string, std::string> to_kv() const;
  /// Reads known keys from `kv` over the current values; unknown keys are ignored.
  void apply_kv(const std::map<std::string, std::string>& kv);
};

enum class AttackId {
  Fgsm,
  IFgsm,
  Pgd,
  MiFgsm,
  NiFgsm,
  SiNiFgsm,
  SiNiDim,
  SiNiTim,
  SiNiTiDim,
  TiDim,
};

const std::vector<AttackId>& all_attacks();
std::string attack_name(AttackId id);
/// Throws ContractError listing the valid identifiers.
AttackId parse_attack(const std::string& name);
std::string attack_names_joined();

// Elementwise building blocks --------------------------------------------------

/// -1, 0 or +1 per element.
Tensor sign(const Tensor& t);

/// Clamp into [x - eps, x + eps], then into [0, 1].
Tensor project(const Tensor& x_adv, const Tensor& x, double eps);

/// x_adv + alpha * mu * g. No clipping.
Tensor nes_point(const Tensor& x_adv, const Tensor& g, double alpha, double mu);

/// x / 2^i.
Tensor scale_copy(const Tensor& x, int i);

/// Divides each sample's slice by its L1 norm; slices with norm < 1e-12 pass unchanged.
Tensor normalize_l1(const Tensor& g);

// Input diversity ---------------------------------------------------------------

/// Transformed batch with the transpose of the (linear) transform.
struct TransformedInput {
  Tensor value;
  std::function<Tensor(const Tensor&)> pullback;
};

/// Draws fresh randomness on every call.
using InputTransform = std::function<TransformedInput(const Tensor&)>;

/// Per-sample nearest-neighbour shrink to r x r with r drawn from
/// [ceil(min_ratio * S), S], placed at a random offset on a zero canvas.
/// Shape is preserved.
class ResizePad {
 public:
  struct Placement {
    bool active = false;
    std::size_t rows = 0, cols = 0, top = 0, left = 0;
  };

  /// One draw per sample, from `rng`; inactive with probability 1 - p.
  static ResizePad draw(const Shape& batch_shape, double p, double min_ratio, Rng& rng);

  Tensor apply(const Tensor& x) const;
  /// Transpose of apply().
  Tensor pullback(const Tensor& g) const;

  const std::vector<Placement>& placements() const { return placements_; }

 private:
  Shape shape_;
  std::vector<Placement> placements_;
};

Tensor dim_transform(const Tensor& x, double p, Rng& rng, double min_ratio = 0.85);

/// Normalised Gaussian weights over a k x k grid.
struct Kernel {
  std::size_t size = 1;
  std::vector<double> weights;
  double at(std::size_t r, std::size_t c) const { return weights[r * size + c]; }
};

Kernel gaussian_kernel(int k, double sigma);

/// Per-sample, per-channel "same" convolution with zero padding.
Tensor ti_smooth(const Tensor& grad, const Kernel& w);

/// (1/m) * sum_{i<m} d/dx J(transform(x / 2^i)). Gradient is with respect to x.
Tensor sim_grad(const GradientOracle& oracle, const Tensor& x_nes, std::span<const int> labels,
                int m, const InputTransform& transform = {});

// Attacks ---------------------------------------------------------------------

Tensor fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels, double eps);
Tensor i_fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
              const AttackConfig& cfg);
Tensor pgd(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
           const AttackConfig& cfg, Rng& rng);
Tensor mi_fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
               const AttackConfig& cfg);
Tensor ni_fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
               const AttackConfig& cfg);
Tensor si_ni_fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
                  const AttackConfig& cfg);

/// Lookahead, per-copy DIM inside the scale sum, TIM smoothing, L1 momentum,
/// projection. DIM is off when `use_dim` is false (p forced to 0); TIM is off
/// when `use_tim` is false (kernel forced to 1x1).
Tensor si_ni_ti_dim(const GradientOracle& oracle, const Tensor& x, std::span<const int> labels,
                    const AttackConfig& cfg, Rng& rng, bool use_dim = true, bool use_tim = true);

/// Dispatches by identifier using an Rng seeded from cfg.seed.
Tensor run_attack(AttackId id, const GradientOracle& oracle, const Tensor& x,
                  std::span<const int> labels, const AttackConfig& cfg);

/// Runs `id` over fixed-size chunks of the batch, each with a seed derived from
/// cfg.seed and the chunk index, optionally on several threads. The output
/// does not depend on `threads`.
Tensor craft(AttackId id, const GradientOracle& oracle, const Tensor& x,
             std::span<const int> labels, const AttackConfig& cfg, unsigned threads = 1,
             std::size_t chunk = 32);

}  // namespace tb::attacks
