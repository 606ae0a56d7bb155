#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tb/kv.hpp"
#include "tb/tensor.hpp"

namespace tb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitBudget = 3;

/// Bad flags, unknown or missing config keys, invalid config values.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An output left the epsilon-ball or the pixel range.
class BudgetViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration -------------------------------------------------------------

/// Every recognised key with its default. `auto` marks values derived from
/// other keys (attack.step_size, attack.kernel_sigma).
const kv::Map& default_config();

/// Layers defaults, then `file` (a key/value file or a JSON manifest), then
/// `flags`. Unknown keys are a UsageError naming the key.
kv::Map resolve_config(const std::filesystem::path& file, const kv::Map& flags);

/// Reads the `config` object of a run manifest.
kv::Map config_from_manifest(const std::filesystem::path& path);

// Run manifest --------------------------------------------------------------

struct Artifact {
  std::string role;
  std::string path;
  std::string fnv1a;
};

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  kv::Map config;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<Artifact> inputs;
  std::vector<Artifact> outputs;
  std::map<std::string, std::string> notes;
  double duration_seconds = 0.0;
  std::string version;

  /// Fails when a listed output is missing.
  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

Artifact describe_file(const std::string& role, const std::filesystem::path& path);

// Portable graymap ----------------------------------------------------------

struct Pgm {
  std::size_t width = 0;
  std::size_t height = 0;
  /// Row-major, 0..maxval.
  std::vector<int> pixels;
  int maxval = 255;
};

/// Plain (P2) graymap.
void write_pgm(const std::filesystem::path& path, const Pgm& image);
Pgm read_pgm(const std::filesystem::path& path);

/// Two rows of tiles, benign on top and adversarial below, one column per
/// index, with a one-pixel white gutter. Single-channel batches only.
Pgm image_grid(const Tensor& benign, const Tensor& adversarial,
               const std::vector<std::size_t>& indices);

/// `n` distinct indices below `size`, seeded, in ascending order.
std::vector<std::size_t> pick_indices(std::size_t size, std::size_t n, std::uint64_t seed);

// Entry points --------------------------------------------------------------

/// Runs `tbench <args...>`; `args[0]` is the subcommand. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

std::string version();

}  // namespace tb::cli
