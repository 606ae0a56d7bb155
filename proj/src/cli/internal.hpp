#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tb/attacks.hpp"
#include "tb/cli.hpp"
#include "tb/data.hpp"
#include "tb/defense.hpp"
#include "tb/train.hpp"

namespace tb::cli::detail {

const std::string& require(const kv::Map& cfg, const std::string& key);

attacks::AttackConfig attack_config(const kv::Map& cfg);
attacks::AttackId attack_id(const kv::Map& cfg);
train::TrainConfig train_config(const kv::Map& cfg);
defense::DefenseConfig defense_config(const kv::Map& cfg);
data::SynthParams synth_params(const kv::Map& cfg);

/// Loads IDX files or generates the synthetic corpus, then applies
/// data.split and data.limit. IDX inputs are appended to `inputs`.
data::Dataset load_dataset(const kv::Map& cfg, std::vector<Artifact>& inputs);

/// Overwrites derived (`auto`) entries with the values actually used, so the
/// manifest snapshot is complete.
kv::Map resolved_snapshot(const kv::Map& cfg);

std::vector<std::string> split_list(const std::string& text);

}  // namespace tb::cli::detail
