#include "tb/eval.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "tb/kv.hpp"
#include "tb/rng.hpp"

namespace tb::eval {

using nlohmann::json;

NamedClassifier as_target(const NamedModel& m) { return {m.id, m.model}; }

RateCount count_fooled(const attacks::Classifier& model, const Tensor& x_adv,
                       std::span<const int> labels) {
  if (x_adv.rank() != 4 || x_adv.dim(0) != labels.size())
    throw ContractError("success rate: batch and labels disagree");
  const auto pred = model.predict(x_adv);
  RateCount rc;
  rc.total = labels.size();
  for (std::size_t i = 0; i < pred.size(); ++i) rc.fooled += pred[i] != labels[i];
  return rc;
}

double attack_success_rate(const attacks::Classifier& model, const Tensor& x_adv,
                           std::span<const int> labels) {
  if (labels.empty() || x_adv.empty()) throw ContractError("success rate of an empty batch");
  return count_fooled(model, x_adv, labels).rate();
}

std::vector<std::size_t> consensus_subset(std::span<const attacks::Classifier* const> models,
                                          const data::Dataset& ds) {
  std::vector<bool> keep(ds.size(), true);
  for (const auto* m : models) {
    const auto pred = m->predict(ds.images());
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (pred[i] != ds.labels()[i]) keep[i] = false;
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (keep[i]) idx.push_back(i);
  return idx;
}

double TransferReport::rate(std::size_t s, std::size_t t) const {
  const auto n = counts.at(s).at(t);
  return n ? static_cast<double>(fooled[s][t]) / static_cast<double>(n) : 0.0;
}

void TransferReport::validate() const {
  if (fooled.size() != sources.size() || counts.size() != sources.size())
    throw ContractError("transfer report: row count differs from sources");
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (fooled[s].size() != targets.size() || counts[s].size() != targets.size())
      throw ContractError("transfer report: column count differs from targets");
    for (std::size_t t = 0; t < targets.size(); ++t)
      if (fooled[s][t] > counts[s][t]) throw ContractError("transfer report: rate above 1");
  }
}

std::string TransferReport::to_json() const {
  validate();
  json j;
  j["sources"] = sources;
  j["targets"] = targets;
  j["attack"] = attack;
  j["config"] = config;
  j["seed"] = seed;
  j["evaluated"] = evaluated;
  j["fooled"] = fooled;
  j["counts"] = counts;
  json rates = json::array();
  json white = json::array();
  for (std::size_t s = 0; s < sources.size(); ++s) {
    json r = json::array(), w = json::array();
    for (std::size_t t = 0; t < targets.size(); ++t) {
      r.push_back(rate(s, t));
      w.push_back(white_box(s, t));
    }
    rates.push_back(r);
    white.push_back(w);
  }
  j["rates"] = rates;
  j["white_box"] = white;
  return j.dump(2) + "\n";
}

TransferReport TransferReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  TransferReport r;
  r.sources = j.at("sources").get<std::vector<std::string>>();
  r.targets = j.at("targets").get<std::vector<std::string>>();
  r.attack = j.at("attack").get<std::string>();
  r.config = j.at("config").get<std::map<std::string, std::string>>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.evaluated = j.at("evaluated").get<std::size_t>();
  r.fooled = j.at("fooled").get<std::vector<std::vector<std::size_t>>>();
  r.counts = j.at("counts").get<std::vector<std::vector<std::size_t>>>();
  r.validate();
  return r;
}

std::string TransferReport::to_csv() const {
  validate();
  std::string out = "source";
  for (const auto& t : targets) out += "," + t;
  out += "\n";
  for (std::size_t s = 0; s < sources.size(); ++s) {
    out += sources[s];
    for (std::size_t t = 0; t < targets.size(); ++t) out += "," + kv::format_real(rate(s, t));
    out += "\n";
  }
  return out;
}

TransferReport transfer_matrix(std::span<const NamedModel> sources,
                               std::span<const NamedClassifier> targets, attacks::AttackId attack,
                               const attacks::AttackConfig& cfg, const data::Dataset& ds,
                               std::uint64_t seed, unsigned threads) {
  if (sources.empty() || targets.empty())
    throw ContractError("transfer matrix needs at least one source and one target");
  cfg.validate();

  std::vector<const attacks::Classifier*> everyone;
  for (const auto& s : sources) everyone.push_back(s.model.get());
  for (const auto& t : targets) everyone.push_back(t.classifier.get());
  const auto keep = consensus_subset(everyone, ds);

  TransferReport report;
  report.attack = attacks::attack_name(attack);
  report.config = cfg.to_kv();
  report.seed = seed;
  report.evaluated = keep.size();
  for (const auto& s : sources) report.sources.push_back(s.id);
  for (const auto& t : targets) report.targets.push_back(t.id);
  report.fooled.assign(sources.size(), std::vector<std::size_t>(targets.size(), 0));
  report.counts.assign(sources.size(), std::vector<std::size_t>(targets.size(), 0));
  if (keep.empty()) return report;

  const data::Dataset eval_set = ds.subset(keep);
  for (std::size_t s = 0; s < sources.size(); ++s) {
    attacks::AttackConfig local = cfg;
    local.seed = derive_seed(seed, {s});
    const Tensor x_adv = attacks::craft(attack, *sources[s].model, eval_set.images(),
                                        eval_set.labels(), local, threads);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const RateCount rc = count_fooled(*targets[t].classifier, x_adv, eval_set.labels());
      report.fooled[s][t] = rc.fooled;
      report.counts[s][t] = rc.total;
    }
  }
  return report;
}

TransferReport score_adversarial(const std::string& source_id, const std::string& attack,
                                 std::span<const NamedClassifier> targets,
                                 const data::Dataset& benign, const Tensor& x_adv,
                                 std::map<std::string, std::string> config, std::uint64_t seed) {
  if (targets.empty()) throw ContractError("scoring needs at least one target");
  if (x_adv.shape() != benign.images().shape())
    throw ContractError("adversarial batch " + shape_string(x_adv.shape()) +
                        " does not match benign batch " + shape_string(benign.images().shape()));
  std::vector<const attacks::Classifier*> everyone;
  for (const auto& t : targets) everyone.push_back(t.classifier.get());
  const auto keep = consensus_subset(everyone, benign);

  TransferReport report;
  report.sources = {source_id};
  report.attack = attack;
  report.config = std::move(config);
  report.seed = seed;
  report.evaluated = keep.size();
  for (const auto& t : targets) report.targets.push_back(t.id);
  report.fooled.assign(1, std::vector<std::size_t>(targets.size(), 0));
  report.counts.assign(1, std::vector<std::size_t>(targets.size(), 0));
  if (keep.empty()) return report;

  const Tensor adv = gather_rows(x_adv, keep);
  const data::Dataset kept = benign.subset(keep);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const RateCount rc = count_fooled(*targets[t].classifier, adv, kept.labels());
    report.fooled[0][t] = rc.fooled;
    report.counts[0][t] = rc.total;
  }
  return report;
}

std::vector<double> probe_scales(double s_min, double s_max, double step) {
  if (!(s_min > 0.0) || !(s_max >= s_min) || !(step > 0.0) || !std::isfinite(s_max))
    throw ContractError("scale probe: need 0 < s_min <= s_max and step > 0");
  const auto count = static_cast<std::size_t>(std::floor((s_max - s_min) / step + 1e-9)) + 1;
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    // Snap to a 1e-12 grid so 0.1 + 9 * 0.1 lands on 1.0.
    out[i] = std::round((s_min + static_cast<double>(i) * step) * 1e12) / 1e12;
  }
  return out;
}

ScaleCurve scale_probe(const attacks::DifferentiableModel& model, const data::Dataset& ds,
                       double s_min, double s_max, double step, const std::string& model_id) {
  ScaleCurve curve;
  curve.model_id = model_id;
  curve.samples = ds.size();
  curve.scales = probe_scales(s_min, s_max, step);
  constexpr std::size_t chunk = 256;
  for (double s : curve.scales) {
    double total = 0.0;
    for (std::size_t b = 0; b < ds.size(); b += chunk) {
      const std::size_t e = std::min(ds.size(), b + chunk);
      Tensor x = ds.images().rows(b, e);
      for (double& v : x.raw()) v *= s;
      std::span<const int> y(ds.labels().data() + b, e - b);
      for (double l : diffnet::cross_entropy_per_sample(model.logits(x), y)) total += l;
    }
    curve.mean_losses.push_back(total / static_cast<double>(ds.size()));
  }
  return curve;
}

std::string ScaleCurve::to_csv() const {
  std::string out = "scale,mean_loss\n";
  for (std::size_t i = 0; i < scales.size(); ++i)
    out += kv::format_real(scales[i]) + "," + kv::format_real(mean_losses[i]) + "\n";
  return out;
}

ScaleCurve ScaleCurve::from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "scale,mean_loss")
    throw ContractError("scale curve CSV must start with 'scale,mean_loss'");
  ScaleCurve c;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ContractError("scale curve CSV row lacks a comma");
    c.scales.push_back(kv::parse_real(line.substr(0, comma), "scale"));
    c.mean_losses.push_back(kv::parse_real(line.substr(comma + 1), "mean_loss"));
  }
  for (std::size_t i = 1; i < c.scales.size(); ++i)
    if (!(c.scales[i] > c.scales[i - 1])) throw ContractError("scale curve scales must increase");
  return c;
}

std::vector<SweepRow> iteration_sweep(const NamedModel& source,
                                      std::span<const NamedClassifier> targets,
                                      std::span<const attacks::AttackId> attack_ids,
                                      std::span<const int> step_counts,
                                      const attacks::AttackConfig& cfg, const data::Dataset& ds,
                                      std::uint64_t seed, unsigned threads) {
  for (int t : step_counts)
    if (t < 1) throw ContractError("iteration sweep: step counts must be positive");
  cfg.validate();
  std::vector<const attacks::Classifier*> everyone{source.model.get()};
  for (const auto& t : targets) everyone.push_back(t.classifier.get());
  const auto keep = consensus_subset(everyone, ds);
  std::vector<SweepRow> rows;
  if (keep.empty()) return rows;
  const data::Dataset eval_set = ds.subset(keep);

  attacks::AttackConfig fixed = cfg;
  fixed.step_size = cfg.alpha();
  for (std::size_t a = 0; a < attack_ids.size(); ++a) {
    for (int steps : step_counts) {
      attacks::AttackConfig local = fixed;
      local.steps = steps;
      local.seed = derive_seed(seed, {a, static_cast<std::uint64_t>(steps)});
      const Tensor x_adv = attacks::craft(attack_ids[a], *source.model, eval_set.images(),
                                          eval_set.labels(), local, threads);
      for (const auto& t : targets)
        rows.push_back({attacks::attack_name(attack_ids[a]), steps, t.id,
                        count_fooled(*t.classifier, x_adv, eval_set.labels())});
    }
  }
  return rows;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::string out = "attack,steps,target,fooled,total,asr\n";
  for (const auto& r : rows)
    out += r.attack + "," + std::to_string(r.steps) + "," + r.target + "," +
           std::to_string(r.result.fooled) + "," + std::to_string(r.result.total) + "," +
           kv::format_real(r.result.rate()) + "\n";
  return out;
}

}  // namespace tb::eval
