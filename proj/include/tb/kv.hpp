#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace tb::kv {

/// Flat `key = value` store. Keys are dotted (`attack.epsilon`, `defense.votes`).
using Map = std::map<std::string, std::string>;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses `key = value` lines; `#` starts a comment. Errors carry the line number.
Map parse(const std::string& text, const std::string& origin = "<config>");
Map read_file(const std::filesystem::path& path);
std::string format(const Map& map);

/// Accepts plain reals and `a/b` fractions such as `16/255`.
double parse_real(const std::string& text, const std::string& key);
std::int64_t parse_int(const std::string& text, const std::string& key);
std::uint64_t parse_uint(const std::string& text, const std::string& key);
bool parse_bool(const std::string& text, const std::string& key);

/// Shortest text that reads back to the same double.
std::string format_real(double v);

}  // namespace tb::kv
