#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` file. `#` starts a comment; blank lines are skipped.
class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile parse(std::istream& in) {
    KeyValueFile kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto text = trim(line);
      if (text.empty()) continue;
      const auto eq = text.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      auto key = trim(text.substr(0, eq));
      auto value = trim(text.substr(eq + 1));
      if (key.empty())
        throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      if (kv.values_.count(key))
        throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
      kv.values_[key] = value;
    }
    return kv;
  }

  static KeyValueFile parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::map<std::string, std::string>& values() const { return values_; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  /// Reads `key` into `out` when present, marking it consumed.
  void read(const std::string& key, double& out) const {
    if (auto s = take(key)) out = to_double(key, *s);
  }
  void read(const std::string& key, int& out) const {
    if (auto s = take(key)) out = static_cast<int>(to_integer<long long>(key, *s));
  }
  void read(const std::string& key, std::uint64_t& out) const {
    if (auto s = take(key)) out = to_integer<std::uint64_t>(key, *s);
  }
  void read(const std::string& key, bool& out) const {
    if (auto s = take(key)) {
      if (*s == "1" || *s == "true") out = true;
      else if (*s == "0" || *s == "false") out = false;
      else throw ConfigError("key '" + key + "': expected boolean, got '" + *s + "'");
    }
  }
  void read(const std::string& key, std::string& out) const {
    if (auto s = take(key)) out = *s;
  }
  void read(const std::string& key, std::vector<double>& out) const {
    if (auto s = take(key)) {
      out.clear();
      std::stringstream ss(*s);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    }
  }
  void read(const std::string& key, std::vector<int>& out) const {
    if (auto s = take(key)) {
      out.clear();
      std::stringstream ss(*s);
      std::string item;
      while (std::getline(ss, item, ','))
        out.push_back(static_cast<int>(to_integer<long long>(key, trim(item))));
    }
  }

  /// Keys never read by any consumer; callers reject these as typos.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!consumed_.count(k)) out.push_back(k);
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  const std::string* take(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
  }

  static double to_double(const std::string& key, const std::string& s) {
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected number, got '" + s + "'");
    }
  }

  template <typename Int>
  static Int to_integer(const std::string& key, const std::string& s) {
    Int v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      throw ConfigError("key '" + key + "': expected integer, got '" + s + "'");
    return v;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace hrl
