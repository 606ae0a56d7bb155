#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tb/attacks.hpp"
#include "tb/data.hpp"

namespace tb::eval {

struct NamedModel {
  std::string id;
  attacks::ModelPtr model;
};

struct NamedClassifier {
  std::string id;
  std::shared_ptr<const attacks::Classifier> classifier;
};

NamedClassifier as_target(const NamedModel& m);

struct RateCount {
  std::size_t fooled = 0;
  std::size_t total = 0;
  double rate() const { return total ? static_cast<double>(fooled) / static_cast<double>(total) : 0.0; }
};

/// Number of samples whose prediction differs from the true label.
RateCount count_fooled(const attacks::Classifier& model, const Tensor& x_adv,
                       std::span<const int> labels);

/// Fraction of samples misclassified. Throws ContractError on an empty batch.
double attack_success_rate(const attacks::Classifier& model, const Tensor& x_adv,
                           std::span<const int> labels);

/// Indices of samples every classifier gets right.
std::vector<std::size_t> consensus_subset(std::span<const attacks::Classifier* const> models,
                                          const data::Dataset& ds);

/// Source x target success-rate matrix with the counts behind every rate.
struct TransferReport {
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  std::string attack;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  /// Size of the consensus evaluation subset.
  std::size_t evaluated = 0;
  /// [source][target]
  std::vector<std::vector<std::size_t>> fooled;
  std::vector<std::vector<std::size_t>> counts;

  double rate(std::size_t s, std::size_t t) const;
  bool white_box(std::size_t s, std::size_t t) const { return sources[s] == targets[t]; }

  void validate() const;
  std::string to_json() const;
  static TransferReport from_json(const std::string& text);
  /// Header `source,<target ids...>`, one row per source.
  std::string to_csv() const;

  bool operator==(const TransferReport&) const = default;
};

/// Evaluation subset is the consensus of all sources and targets. Each source
/// crafts once; every target is scored on the same adversarial batch.
TransferReport transfer_matrix(std::span<const NamedModel> sources,
                               std::span<const NamedClassifier> targets, attacks::AttackId attack,
                               const attacks::AttackConfig& cfg, const data::Dataset& ds,
                               std::uint64_t seed, unsigned threads = 1);

/// Scores an already crafted batch as a one-row report. The subset is the
/// consensus of all targets on the benign images.
TransferReport score_adversarial(const std::string& source_id, const std::string& attack,
                                 std::span<const NamedClassifier> targets,
                                 const data::Dataset& benign, const Tensor& x_adv,
                                 std::map<std::string, std::string> config = {},
                                 std::uint64_t seed = 0);

/// Mean loss against input scale factor.
struct ScaleCurve {
  std::string model_id;
  std::size_t samples = 0;
  std::vector<double> scales;
  std::vector<double> mean_losses;

  /// Header `scale,mean_loss`.
  std::string to_csv() const;
  static ScaleCurve from_csv(const std::string& text);
};

/// Scales s_min, s_min + step, ... up to s_max. Inputs are multiplied by s
/// without re-clamping to [0,1].
ScaleCurve scale_probe(const attacks::DifferentiableModel& model, const data::Dataset& ds,
                       double s_min = 0.1, double s_max = 2.0, double step = 0.1,
                       const std::string& model_id = "");

/// Scale values scale_probe() visits for the given range.
std::vector<double> probe_scales(double s_min, double s_max, double step);

struct SweepRow {
  std::string attack;
  int steps = 0;
  std::string target;
  RateCount result;
};

/// Holds the step size at cfg.alpha() for every T. Crafts on `source`,
/// scores each target, over the consensus subset of source and targets.
std::vector<SweepRow> iteration_sweep(const NamedModel& source,
                                      std::span<const NamedClassifier> targets,
                                      std::span<const attacks::AttackId> attacks,
                                      std::span<const int> step_counts,
                                      const attacks::AttackConfig& cfg, const data::Dataset& ds,
                                      std::uint64_t seed, unsigned threads = 1);

std::string sweep_to_csv(std::span<const SweepRow> rows);

}  // namespace tb::eval
