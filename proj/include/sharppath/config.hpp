#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sharppath/errors.hpp"

namespace sharppath {

/// One parsed config value. Arrays are flat lists of scalars.
struct ConfigValue {
  enum class Kind : uint8_t { Bool, Int, Float, Str, Array };
  Kind kind = Kind::Str;
  bool b = false;
  long long i = 0;
  double f = 0.0;
  std::string s;
  std::vector<ConfigValue> arr;
};

/// Key/value config files with [section] tables, the one external input
/// format of the CLI. Keys are stored dotted ("optimizer.eta"). Unknown
/// keys are rejected at validation time: a silent typo in a sweep manifest
/// is the main operational hazard this format guards against.
class ConfigFile {
public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text,
                                 const std::string& origin);

  bool has(const std::string& key) const;

  bool get_bool(const std::string& key, bool fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  std::vector<double> get_double_array(const std::string& key) const;
  std::vector<long long> get_int_array(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;

  /// Throws ConfigError naming the first key not in the allowed set.
  void require_known(const std::vector<std::string>& allowed) const;

  const std::map<std::string, ConfigValue>& entries() const { return entries_; }

private:
  const ConfigValue* find(const std::string& key) const;
  std::map<std::string, ConfigValue> entries_;
  std::string origin_;
};

} // namespace sharppath
