#include <cmath>

#include "tb/attacks.hpp"
#include "tb/kv.hpp"

namespace tb::attacks {

void AttackConfig::validate() const {
  auto fail = [](const std::string& why) { throw ContractError("attack config: " + why); };
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) fail("epsilon must be >= 0");
  if (steps < 1) fail("steps must be >= 1");
  if (step_size && (!(*step_size > 0.0) || !std::isfinite(*step_size)))
    fail("step_size must be > 0");
  if (epsilon > 0.0 && !(alpha() > 0.0)) fail("step size must be > 0");
  if (!(decay >= 0.0) || !std::isfinite(decay)) fail("decay must be >= 0");
  if (scale_copies < 1) fail("scale_copies must be >= 1");
  if (scale_copies > 60) fail("scale_copies must be <= 60");
  if (!(dim_probability >= 0.0 && dim_probability <= 1.0))
    fail("dim_probability must lie in [0,1]");
  if (!(dim_min_ratio > 0.0 && dim_min_ratio <= 1.0)) fail("dim_min_ratio must lie in (0,1]");
  if (kernel_size < 1 || kernel_size % 2 == 0) fail("kernel_size must be an odd positive integer");
  if (!(sigma() > 0.0) || !std::isfinite(sigma())) fail("kernel_sigma must be > 0");
}

std::map<std::string, std::string> AttackConfig::to_kv() const {
  using kv::format_real;
  return {
      {"attack.epsilon", format_real(epsilon)},
      {"attack.steps", std::to_string(steps)},
      {"attack.step_size", format_real(alpha())},
      {"attack.decay", format_real(decay)},
      {"attack.scale_copies", std::to_string(scale_copies)},
      {"attack.dim_probability", format_real(dim_probability)},
      {"attack.dim_min_ratio", format_real(dim_min_ratio)},
      {"attack.kernel_size", std::to_string(kernel_size)},
      {"attack.kernel_sigma", format_real(sigma())},
      {"attack.seed", std::to_string(seed)},
  };
}

void AttackConfig::apply_kv(const std::map<std::string, std::string>& map) {
  auto get = [&map](const char* key) -> const std::string* {
    auto it = map.find(key);
    return it == map.end() ? nullptr : &it->second;
  };
  if (auto* v = get("attack.epsilon")) epsilon = kv::parse_real(*v, "attack.epsilon");
  if (auto* v = get("attack.steps")) steps = static_cast<int>(kv::parse_int(*v, "attack.steps"));
  if (auto* v = get("attack.step_size")) step_size = kv::parse_real(*v, "attack.step_size");
  if (auto* v = get("attack.decay")) decay = kv::parse_real(*v, "attack.decay");
  if (auto* v = get("attack.scale_copies"))
    scale_copies = static_cast<int>(kv::parse_int(*v, "attack.scale_copies"));
  if (auto* v = get("attack.dim_probability"))
    dim_probability = kv::parse_real(*v, "attack.dim_probability");
  if (auto* v = get("attack.dim_min_ratio"))
    dim_min_ratio = kv::parse_real(*v, "attack.dim_min_ratio");
  if (auto* v = get("attack.kernel_size"))
    kernel_size = static_cast<int>(kv::parse_int(*v, "attack.kernel_size"));
  if (auto* v = get("attack.kernel_sigma")) kernel_sigma = kv::parse_real(*v, "attack.kernel_sigma");
  if (auto* v = get("attack.seed")) seed = kv::parse_uint(*v, "attack.seed");
}

namespace {

struct Entry {
  AttackId id;
  const char* name;
};

constexpr Entry kAttacks[] = {
    {AttackId::Fgsm, "fgsm"},         {AttackId::IFgsm, "ifgsm"},
    {AttackId::Pgd, "pgd"},           {AttackId::MiFgsm, "mifgsm"},
    {AttackId::NiFgsm, "nifgsm"},     {AttackId::SiNiFgsm, "sinifgsm"},
    {AttackId::SiNiDim, "sinidim"},   {AttackId::SiNiTim, "sinitim"},
    {AttackId::SiNiTiDim, "sinitidim"}, {AttackId::TiDim, "tidim"},
};

}  // namespace

const std::vector<AttackId>& all_attacks() {
  static const std::vector<AttackId> ids = [] {
    std::vector<AttackId> v;
    for (const auto& e : kAttacks) v.push_back(e.id);
    return v;
  }();
  return ids;
}

std::string attack_name(AttackId id) {
  for (const auto& e : kAttacks)
    if (e.id == id) return e.name;
  return "unknown";
}

std::string attack_names_joined() {
  std::string out;
  for (const auto& e : kAttacks) {
    if (!out.empty()) out += ", ";
    out += e.name;
  }
  return out;
}

AttackId parse_attack(const std::string& name) {
  for (const auto& e : kAttacks)
    if (name == e.name) return e.id;
  throw ContractError("unknown attack '" + name + "'; valid ids: " + attack_names_joined());
}

}  // namespace tb::attacks
