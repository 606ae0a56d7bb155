#include <fstream>
#include <sstream>

#include "internal.hpp"
#include "json.hpp"
#include "tb/kv.hpp"

namespace tb::cli {

namespace {

kv::Map build_defaults() {
  using kv::format_real;
  kv::Map m;
  m["data.images"] = "";
  m["data.labels"] = "";
  m["data.classes"] = "0";
  m["data.synth"] = "false";
  m["data.synth.seed"] = "0";
  m["data.synth.count"] = "1500";
  m["data.synth.classes"] = "10";
  m["data.synth.side"] = "16";
  const data::SynthParams sp;
  m["data.synth.shared_bumps"] = std::to_string(sp.shared_bumps);
  m["data.synth.bumps_per_class"] = std::to_string(sp.bumps_per_class);
  m["data.synth.class_amplitude"] = format_real(sp.class_amplitude);
  m["data.synth.bump_sigma_min"] = format_real(sp.bump_sigma_min);
  m["data.synth.bump_sigma_max"] = format_real(sp.bump_sigma_max);
  m["data.synth.contrast_min"] = format_real(sp.contrast_min);
  m["data.synth.contrast_max"] = format_real(sp.contrast_max);
  m["data.synth.background_max"] = format_real(sp.background_max);
  m["data.synth.noise_stddev"] = format_real(sp.noise_stddev);
  m["data.synth.max_shift"] = std::to_string(sp.max_shift);
  m["data.split"] = "all";
  m["data.split_fraction"] = "0.8";
  m["data.split_seed"] = "0";
  m["data.limit"] = "0";

  m["model.arch"] = "cnn_a";
  m["model.init_seed"] = "0";

  for (const auto& [k, v] : train::TrainConfig{}.to_kv()) m[k] = v;
  m["train.adversarial"] = "false";
  m["train.adversarial_epsilon"] = format_real(4.0 / 255.0);

  for (const auto& [k, v] : attacks::AttackConfig{}.to_kv()) m[k] = v;
  m["attack.id"] = "ifgsm";
  m["attack.step_size"] = "auto";
  m["attack.kernel_sigma"] = "auto";

  for (const auto& [k, v] : defense::DefenseConfig{}.to_kv()) m[k] = v;

  m["probe.s_min"] = "0.1";
  m["probe.s_max"] = "2";
  m["probe.step"] = "0.1";

  m["sweep.attacks"] = "mifgsm,nifgsm";
  m["sweep.steps"] = "4,8,12,16";

  m["grid.count"] = "12";
  m["grid.seed"] = "0";
  return m;
}

void overlay(kv::Map& into, const kv::Map& from, const std::string& origin) {
  const auto& known = default_config();
  for (const auto& [k, v] : from) {
    if (!known.count(k)) throw UsageError(origin + ": unknown config key '" + k + "'");
    into[k] = v;
  }
}

bool looks_like_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  char c = 0;
  while (is.get(c))
    if (!std::isspace(static_cast<unsigned char>(c))) return c == '{';
  return false;
}

}  // namespace

const kv::Map& default_config() {
  static const kv::Map defaults = build_defaults();
  return defaults;
}

kv::Map config_from_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  if (!j.contains("config") || !j["config"].is_object())
    throw UsageError(path.string() + ": manifest has no 'config' object");
  kv::Map m;
  for (const auto& [k, v] : j["config"].items()) {
    if (!v.is_string()) throw UsageError(path.string() + ": config value for '" + k + "' is not a string");
    m[k] = v.get<std::string>();
  }
  return m;
}

kv::Map resolve_config(const std::filesystem::path& file, const kv::Map& flags) {
  kv::Map cfg = default_config();
  if (!file.empty()) {
    if (!std::filesystem::exists(file)) throw UsageError("config file not found: " + file.string());
    kv::Map from_file;
    try {
      from_file = looks_like_json(file) ? config_from_manifest(file) : kv::read_file(file);
    } catch (const kv::ParseError& e) {
      throw UsageError(e.what());
    }
    overlay(cfg, from_file, file.string());
  }
  overlay(cfg, flags, "command line");
  return cfg;
}

namespace detail {

const std::string& require(const kv::Map& cfg, const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end() || it->second.empty())
    throw UsageError("missing required config key '" + key + "'");
  return it->second;
}

namespace {

// Converts value errors into usage errors that carry the key.
template <typename F>
auto checked(F&& f) {
  try {
    return f();
  } catch (const kv::ParseError& e) {
    throw UsageError(e.what());
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
}

kv::Map without_auto(const kv::Map& cfg) {
  kv::Map out;
  for (const auto& [k, v] : cfg)
    if (v != "auto") out[k] = v;
  return out;
}

}  // namespace

attacks::AttackConfig attack_config(const kv::Map& cfg) {
  return checked([&] {
    attacks::AttackConfig a;
    a.apply_kv(without_auto(cfg));
    a.validate();
    return a;
  });
}

attacks::AttackId attack_id(const kv::Map& cfg) {
  return checked([&] { return attacks::parse_attack(require(cfg, "attack.id")); });
}

train::TrainConfig train_config(const kv::Map& cfg) {
  return checked([&] {
    train::TrainConfig t;
    t.apply_kv(cfg);
    t.validate();
    return t;
  });
}

defense::DefenseConfig defense_config(const kv::Map& cfg) {
  return checked([&] {
    defense::DefenseConfig d;
    d.apply_kv(cfg);
    d.validate();
    return d;
  });
}

data::SynthParams synth_params(const kv::Map& cfg) {
  return checked([&] {
    auto real = [&](const char* k) { return kv::parse_real(cfg.at(k), k); };
    auto uint = [&](const char* k) { return kv::parse_uint(cfg.at(k), k); };
    data::SynthParams p;
    p.shared_bumps = uint("data.synth.shared_bumps");
    p.bumps_per_class = uint("data.synth.bumps_per_class");
    p.class_amplitude = real("data.synth.class_amplitude");
    p.bump_sigma_min = real("data.synth.bump_sigma_min");
    p.bump_sigma_max = real("data.synth.bump_sigma_max");
    p.contrast_min = real("data.synth.contrast_min");
    p.contrast_max = real("data.synth.contrast_max");
    p.background_max = real("data.synth.background_max");
    p.noise_stddev = real("data.synth.noise_stddev");
    p.max_shift = static_cast<int>(kv::parse_int(cfg.at("data.synth.max_shift"), "data.synth.max_shift"));
    return p;
  });
}

data::Dataset load_dataset(const kv::Map& cfg, std::vector<Artifact>& inputs) {
  const bool synth = checked([&] { return kv::parse_bool(cfg.at("data.synth"), "data.synth"); });
  data::Dataset ds = [&] {
    if (synth) {
      const auto params = synth_params(cfg);
      return checked([&] {
        return data::synth_blobs(kv::parse_uint(cfg.at("data.synth.seed"), "data.synth.seed"),
                                 kv::parse_uint(cfg.at("data.synth.count"), "data.synth.count"),
                                 kv::parse_uint(cfg.at("data.synth.classes"), "data.synth.classes"),
                                 kv::parse_uint(cfg.at("data.synth.side"), "data.synth.side"),
                                 params);
      });
    }
    const std::filesystem::path images = require(cfg, "data.images");
    const std::filesystem::path labels = require(cfg, "data.labels");
    const auto classes = checked([&] { return kv::parse_uint(cfg.at("data.classes"), "data.classes"); });
    auto loaded = data::load_idx(images, labels, classes);
    inputs.push_back(describe_file("data.images", images));
    inputs.push_back(describe_file("data.labels", labels));
    return loaded;
  }();

  const std::string& which = cfg.at("data.split");
  if (which != "all") {
    if (which != "train" && which != "test")
      throw UsageError("data.split must be one of all, train, test; got '" + which + "'");
    auto parts = checked([&] {
      return data::split(ds, kv::parse_real(cfg.at("data.split_fraction"), "data.split_fraction"),
                         kv::parse_uint(cfg.at("data.split_seed"), "data.split_seed"));
    });
    ds = which == "train" ? std::move(parts.first) : std::move(parts.second);
  }
  const auto limit = checked([&] { return kv::parse_uint(cfg.at("data.limit"), "data.limit"); });
  if (limit > 0) ds = ds.head(limit);
  return ds;
}

kv::Map resolved_snapshot(const kv::Map& cfg) {
  kv::Map out = cfg;
  const auto a = attack_config(cfg);
  for (const auto& [k, v] : a.to_kv()) out[k] = v;
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',') {
      if (!cur.empty()) items.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  return items;
}

}  // namespace detail
}  // namespace tb::cli
