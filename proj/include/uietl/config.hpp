#pragma once

#include <cmath>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "uietl/error.hpp"
#include "uietl/net/config.hpp"

namespace uietl {

/// Flat `key = value` text, one key per line, `#` starts a comment. Readers
/// mark keys as used; anything left unread is rejected as a typo.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text) {
    KeyValueConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      if (c.values_.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);
      c.values_[key] = trim(line.substr(eq + 1));
    }
    return c;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    if (!take(key)) return fallback;
    return to_double(key, get_string(key, ""));
  }

  long get_long(const std::string& key, long fallback) const {
    if (!take(key)) return fallback;
    const std::string s = get_string(key, "");
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": not an integer: " + s);
    return v;
  }

  int get_int(const std::string& key, int fallback) const {
    const long v = get_long(key, fallback);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
      throw ConfigError(key + ": out of range: " + std::to_string(v));
    return static_cast<int>(v);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!take(key)) return fallback;
    const std::string s = get_string(key, "");
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError(key + ": not a boolean: " + s);
  }

  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    if (!take(key)) return fallback;
    std::vector<int> out;
    for (const auto& tok : split(get_string(key, ""), ',')) {
      int v = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size()) throw ConfigError(key + ": bad list item " + tok);
      out.push_back(v);
    }
    return out;
  }

  /// Keys present in the file that no reader asked for.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  void reject_unknown() const {
    const auto u = unused();
    if (!u.empty()) throw ConfigError("unknown key: " + u.front());
  }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
      cur = trim(cur);
      if (!cur.empty()) out.push_back(cur);
    }
    return out;
  }

  static double to_double(const std::string& key, const std::string& s) {
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw ConfigError(key + ": not a number: " + s);
      return v;
    } catch (const std::logic_error&) {
      throw ConfigError(key + ": not a number: " + s);
    }
  }

  static std::string format(double v) {
    if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  }

  static std::string format(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
  }

 private:
  bool take(const std::string& key) const {
    used_.insert(key);
    return has(key);
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

inline NetworkConfig read_network(const KeyValueConfig& kv) {
  NetworkConfig c;
  c.levels = kv.get_int("network.levels", c.levels);
  c.base_channels = kv.get_int("network.base_channels", c.base_channels);
  c.blocks_per_level = kv.get_int_list("network.blocks", c.blocks_per_level);
  c.heads_per_level = kv.get_int_list("network.heads", c.heads_per_level);
  c.ffn_expansion = kv.get_double("network.ffn_expansion", c.ffn_expansion);
  c.reorder_groups = kv.get_int("network.reorder_groups", c.reorder_groups);
  c.refinement_blocks = kv.get_int("network.refinement_blocks", c.refinement_blocks);
  c.validate();
  return c;
}

inline void write_network(KeyValueConfig& kv, const NetworkConfig& c) {
  kv.set("network.levels", std::to_string(c.levels));
  kv.set("network.base_channels", std::to_string(c.base_channels));
  kv.set("network.blocks", KeyValueConfig::format(c.blocks_per_level));
  kv.set("network.heads", KeyValueConfig::format(c.heads_per_level));
  kv.set("network.ffn_expansion", KeyValueConfig::format(c.ffn_expansion));
  kv.set("network.reorder_groups", std::to_string(c.reorder_groups));
  kv.set("network.refinement_blocks", std::to_string(c.refinement_blocks));
}

/// Dataset split sizes recorded in a config under `data.<split>.<name>`.
inline std::map<std::string, long> read_dataset_counts(const KeyValueConfig& kv) {
  std::map<std::string, long> out;
  for (const auto& [k, v] : kv.values())
    if (k.rfind("data.", 0) == 0) out[k.substr(5)] = kv.get_long(k, 0);
  return out;
}

}  // namespace uietl
