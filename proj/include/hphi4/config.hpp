#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hphi4 {

// One parsed assignment. line > 0 points into the config file; line == 0
// marks a command-line override.
struct ConfigEntry {
  std::string value;
  int line = 0;
  std::string section;
};

// Flat key=value run configuration. [section] headers group keys for the
// reader; lookups ignore them, and a key may appear at most once across the
// whole file. Blank lines and lines starting with # are skipped.
class RunConfig {
 public:
  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text,
                             const std::string& origin = "<config>");

  // "key=value" as given on the command line; replaces any file value.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const;

  // Required getters throw ConfigError naming the key; fallback forms
  // return the fallback when the key is absent. Parse failures name the
  // key and the line it came from.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Comma-separated integers; a lo..hi token expands to the inclusive range.
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  // Integer getter with an inclusive range check.
  std::int64_t get_int_in(const std::string& key, std::int64_t lo, std::int64_t hi,
                          std::int64_t fallback) const;

  const std::map<std::string, ConfigEntry>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

 private:
  const ConfigEntry& require(const std::string& key) const;
  std::string origin_ = "<config>";
  std::map<std::string, ConfigEntry> entries_;
};

}  // namespace hphi4
