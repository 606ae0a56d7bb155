#include "tb/defense.hpp"

#include <cmath>
#include <cstring>

#include "tb/attacks.hpp"
#include "tb/hash.hpp"
#include "tb/kv.hpp"
#include "tb/rng.hpp"

namespace tb::defense {

void DefenseConfig::validate() const {
  if (!(min_ratio > 0.0 && min_ratio <= 1.0))
    throw ContractError("defense config: min_ratio must lie in (0,1]");
  if (votes < 1) throw ContractError("defense config: votes must be >= 1");
}

std::map<std::string, std::string> DefenseConfig::to_kv() const {
  return {{"defense.min_ratio", kv::format_real(min_ratio)},
          {"defense.votes", std::to_string(votes)},
          {"defense.seed", std::to_string(seed)}};
}

void DefenseConfig::apply_kv(const std::map<std::string, std::string>& map) {
  if (auto it = map.find("defense.min_ratio"); it != map.end())
    min_ratio = kv::parse_real(it->second, it->first);
  if (auto it = map.find("defense.votes"); it != map.end())
    votes = static_cast<int>(kv::parse_int(it->second, it->first));
  if (auto it = map.find("defense.seed"); it != map.end())
    seed = kv::parse_uint(it->second, it->first);
}

DefendedModel::DefendedModel(attacks::ModelPtr inner, DefenseConfig cfg)
    : inner_(std::move(inner)), cfg_(cfg) {
  if (!inner_) throw ContractError("defended model needs an inner model");
  cfg_.validate();
}

std::vector<int> DefendedModel::predict(const Tensor& batch) const {
  return predict(batch, cfg_.seed);
}

std::vector<int> DefendedModel::predict(const Tensor& batch, std::uint64_t seed) const {
  if (batch.rank() != 4) throw ContractError("defended predict expects N x C x H x W");
  const std::size_t n = batch.dim(0);
  Shape one = batch.shape();
  one[0] = 1;

  std::vector<std::uint64_t> sample_keys(n);
  for (std::size_t s = 0; s < n; ++s) {
    auto row = batch.row(s);
    sample_keys[s] = fnv1a({reinterpret_cast<const std::uint8_t*>(row.data()),
                            row.size() * sizeof(double)});
  }

  Tensor summed;
  for (int v = 0; v < cfg_.votes; ++v) {
    Tensor transformed(batch.shape());
    for (std::size_t s = 0; s < n; ++s) {
      Rng rng(derive_seed(seed, {sample_keys[s], static_cast<std::uint64_t>(v)}));
      const auto plan = attacks::ResizePad::draw(one, 1.0, cfg_.min_ratio, rng);
      const Tensor out = plan.apply(batch.rows(s, s + 1));
      std::copy(out.raw().begin(), out.raw().end(), transformed.row(s).begin());
    }
    Tensor logits = inner_->logits(transformed);
    if (v == 0) {
      summed = std::move(logits);
    } else {
      for (std::size_t i = 0; i < summed.size(); ++i) summed[i] += logits[i];
    }
  }
  for (double& x : summed.raw()) x /= cfg_.votes;
  return diffnet::argmax_rows(summed);
}

std::vector<int> defended_predict(const DefendedModel& dm, const Tensor& batch,
                                  std::uint64_t seed) {
  return dm.predict(batch, seed);
}

double GapRow::undefended_asr() const {
  return samples ? static_cast<double>(undefended_errors) / static_cast<double>(samples) : 0.0;
}

double GapRow::defended_asr() const {
  return samples ? static_cast<double>(defended_errors) / static_cast<double>(samples) : 0.0;
}

std::vector<GapRow> defense_gap_report(const attacks::Classifier& model, const DefendedModel& dm,
                                       std::span<const TaggedBatch> batches) {
  std::vector<GapRow> rows;
  for (const auto& b : batches) {
    if (b.images.rank() != 4 || b.images.dim(0) != b.labels.size())
      throw ContractError("defense gap report: batch '" + b.attack + "' has mismatched labels");
    GapRow row;
    row.attack = b.attack;
    row.samples = b.labels.size();
    const auto plain = model.predict(b.images);
    const auto defended = dm.predict(b.images);
    for (std::size_t i = 0; i < row.samples; ++i) {
      row.undefended_errors += plain[i] != b.labels[i];
      row.defended_errors += defended[i] != b.labels[i];
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tb::defense
