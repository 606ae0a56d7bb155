#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tb/oracle.hpp"

namespace tb::defense {

/// Inference-time random resize-and-pad with logit voting.
struct DefenseConfig {
  /// Resize target drawn from [ceil(min_ratio * S), S]; 1.0 makes the transform the identity.
  double min_ratio = 0.85;
  int votes = 3;
  std::uint64_t seed = 0;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  void apply_kv(const std::map<std::string, std::string>& kv);
};

/// Wraps a model; predictions average logits over `votes` random draws.
///
/// Each sample's draws are seeded from the master seed and the sample's pixel
/// content, so a prediction does not depend on where the sample sits in the batch.
class DefendedModel final : public attacks::Classifier {
 public:
  DefendedModel(attacks::ModelPtr inner, DefenseConfig cfg);

  std::vector<int> predict(const Tensor& batch) const override;
  std::vector<int> predict(const Tensor& batch, std::uint64_t seed) const;

  const DefenseConfig& config() const { return cfg_; }
  const attacks::DifferentiableModel& inner() const { return *inner_; }

 private:
  attacks::ModelPtr inner_;
  DefenseConfig cfg_;
};

std::vector<int> defended_predict(const DefendedModel& dm, const Tensor& batch, std::uint64_t seed);

/// Adversarial images tagged with the attack that produced them.
struct TaggedBatch {
  std::string attack;
  Tensor images;
  std::vector<int> labels;
};

struct GapRow {
  std::string attack;
  std::size_t samples = 0;
  std::size_t undefended_errors = 0;
  std::size_t defended_errors = 0;
  double undefended_asr() const;
  double defended_asr() const;
};

/// Misclassification rate of each batch with and without the defense.
std::vector<GapRow> defense_gap_report(const attacks::Classifier& model, const DefendedModel& dm,
                                       std::span<const TaggedBatch> batches);

}  // namespace tb::defense
