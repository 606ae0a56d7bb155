#include <filesystem>

#include "json.hpp"
#include "tb/cli.hpp"
#include "tb/hash.hpp"

#ifndef TBENCH_VERSION
#define TBENCH_VERSION "0.0.0"
#endif

namespace tb::cli {

using nlohmann::json;

std::string version() { return TBENCH_VERSION; }

Artifact describe_file(const std::string& role, const std::filesystem::path& path) {
  return {role, path.string(), hex64(hash_file(path))};
}

namespace {

json artifacts_json(const std::vector<Artifact>& list) {
  json a = json::array();
  for (const auto& x : list) a.push_back({{"role", x.role}, {"path", x.path}, {"fnv1a", x.fnv1a}});
  return a;
}

std::vector<Artifact> artifacts_from(const json& a) {
  std::vector<Artifact> out;
  for (const auto& x : a)
    out.push_back({x.at("role").get<std::string>(), x.at("path").get<std::string>(),
                   x.at("fnv1a").get<std::string>()});
  return out;
}

}  // namespace

std::string RunManifest::to_json() const {
  for (const auto& o : outputs)
    if (!std::filesystem::exists(o.path))
      throw std::runtime_error("manifest lists missing output " + o.path);
  json j;
  j["tool"] = "tbench";
  j["version"] = version;
  j["command"] = command;
  j["argv"] = argv;
  j["config"] = config;
  j["seeds"] = seeds;
  j["inputs"] = artifacts_json(inputs);
  j["outputs"] = artifacts_json(outputs);
  j["notes"] = notes;
  j["duration_seconds"] = duration_seconds;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  const json j = json::parse(text);
  RunManifest m;
  m.version = j.at("version").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.config = j.at("config").get<kv::Map>();
  m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
  m.inputs = artifacts_from(j.at("inputs"));
  m.outputs = artifacts_from(j.at("outputs"));
  m.notes = j.at("notes").get<std::map<std::string, std::string>>();
  m.duration_seconds = j.at("duration_seconds").get<double>();
  return m;
}

}  // namespace tb::cli
