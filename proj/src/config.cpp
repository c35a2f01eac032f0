#include "hphi4/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hphi4/errors.hpp"

namespace hphi4 {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' &&
        c != '.') {
      return false;
    }
  }
  return true;
}

std::string where(const RunConfig& cfg, const ConfigEntry& entry) {
  if (entry.line == 0) return "command line";
  return cfg.origin() + ":" + std::to_string(entry.line);
}

std::int64_t parse_int_token(const RunConfig& cfg, const std::string& key,
                             const ConfigEntry& entry, const std::string& token) {
  const std::string t = trim(token);
  std::size_t used = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != t.size()) {
    throw ConfigError(where(cfg, entry) + ": key \"" + key +
                      "\": expected integer, got \"" + t + "\"");
  }
  return out;
}

double parse_double_token(const RunConfig& cfg, const std::string& key,
                          const ConfigEntry& entry, const std::string& token) {
  const std::string t = trim(token);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != t.size()) {
    throw ConfigError(where(cfg, entry) + ": key \"" + key +
                      "\": expected number, got \"" + t + "\"");
  }
  return out;
}

std::vector<std::string> split_commas(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream stream(value);
  while (std::getline(stream, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file \"" + path + "\"");
  std::ostringstream text;
  text << in.rdbuf();
  return from_text(text.str(), path);
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  cfg.origin_ = origin;
  std::istringstream stream(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::string at = origin + ":" + std::to_string(line_no);
    if (line[0] == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError(at + ": malformed section header \"" + line + "\"");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(at + ": empty section header");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(at + ": expected key=value, got \"" + line + "\"");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) {
      throw ConfigError(at + ": invalid key \"" + key + "\"");
    }
    auto [it, fresh] = cfg.entries_.emplace(
        key, ConfigEntry{trim(line.substr(eq + 1)), line_no, section});
    if (!fresh) {
      throw ConfigError(at + ": duplicate key \"" + key + "\" (first set at line " +
                        std::to_string(it->second.line) + ")");
    }
  }
  return cfg;
}

void RunConfig::apply_override(const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override \"" + assignment + "\": expected key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  if (!valid_key(key)) {
    throw ConfigError("override \"" + assignment + "\": invalid key \"" + key + "\"");
  }
  entries_[key] = ConfigEntry{trim(assignment.substr(eq + 1)), 0, ""};
}

bool RunConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

const ConfigEntry& RunConfig::require(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError("missing required key \"" + key + "\" in " + origin_);
  }
  return it->second;
}

std::string RunConfig::get_string(const std::string& key) const {
  return require(key).value;
}

std::string RunConfig::get_string(const std::string& key,
                                  const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second.value;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const ConfigEntry& entry = require(key);
  return parse_int_token(*this, key, entry, entry.value);
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double RunConfig::get_double(const std::string& key) const {
  const ConfigEntry& entry = require(key);
  return parse_double_token(*this, key, entry, entry.value);
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const ConfigEntry& entry = require(key);
  const std::string v = entry.value;
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(where(*this, entry) + ": key \"" + key +
                    "\": expected boolean, got \"" + v + "\"");
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  const ConfigEntry& entry = require(key);
  std::vector<int> out;
  for (const std::string& token : split_commas(entry.value)) {
    const std::size_t dots = token.find("..");
    if (dots != std::string::npos) {
      const std::int64_t lo = parse_int_token(*this, key, entry, token.substr(0, dots));
      const std::int64_t hi = parse_int_token(*this, key, entry, token.substr(dots + 2));
      if (hi < lo) {
        throw ConfigError(where(*this, entry) + ": key \"" + key +
                          "\": descending range \"" + trim(token) + "\"");
      }
      for (std::int64_t v = lo; v <= hi; ++v) out.push_back(static_cast<int>(v));
    } else {
      out.push_back(static_cast<int>(parse_int_token(*this, key, entry, token)));
    }
  }
  if (out.empty()) {
    throw ConfigError(where(*this, entry) + ": key \"" + key + "\": empty list");
  }
  return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key,
                                         const std::vector<int>& fallback) const {
  return has(key) ? get_int_list(key) : fallback;
}

std::vector<double> RunConfig::get_double_list(
    const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  const ConfigEntry& entry = require(key);
  std::vector<double> out;
  for (const std::string& token : split_commas(entry.value)) {
    out.push_back(parse_double_token(*this, key, entry, token));
  }
  return out;
}

std::int64_t RunConfig::get_int_in(const std::string& key, std::int64_t lo,
                                   std::int64_t hi, std::int64_t fallback) const {
  const std::int64_t v = get_int(key, fallback);
  if (v < lo || v > hi) {
    throw ConfigError("key \"" + key + "\": value " + std::to_string(v) +
                      " outside [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      "]");
  }
  return v;
}

}  // namespace hphi4
