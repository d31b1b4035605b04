#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdm {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key=value text with bracketed section headers; a key inside [engine]
// is addressed as "engine.key". '#' starts a comment, blank lines are
// ignored, later assignments win. Values keep their text form until a typed
// getter parses them.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_uint(const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  // Accepts true/false, 1/0, yes/no, on/off in any case.
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated integers; empty or missing key yields an empty list.
  std::vector<int32_t> get_int_list(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::string lookup_or_throw(const std::string& key) const;

  std::map<std::string, std::string> values_;
};

}  // namespace sdm
