#pragma once

// Flat key=value configuration text. Keys use dotted section names
// ("match.ipc", "eval.lr"); '#' starts a comment; whitespace around keys and
// values is ignored; later assignments win. The canonical rendering sorts
// keys, and its 64-bit FNV-1a hash fingerprints a resolved configuration for
// provenance (every emitted CSV carries it).

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "vdst/core/error.hpp"

namespace vdst {
namespace io {

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Config {
 public:
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) {
    require_config(!key.empty(), "config: empty key");
    values_[key] = value;
  }

  std::string get_str(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  std::int64_t get_i64(const std::string& key, std::int64_t def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
      std::size_t used = 0;
      const std::int64_t v = std::stoll(it->second, &used);
      require_config(used == it->second.size(), "");
      return v;
    } catch (...) {
      throw InvalidConfig("config: key '" + key + "' holds '" + it->second +
                          "', not an integer");
    }
  }

  double get_f64(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      require_config(used == it->second.size(), "");
      return v;
    } catch (...) {
      throw InvalidConfig("config: key '" + key + "' holds '" + it->second +
                          "', not a number");
    }
  }

  bool get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw InvalidConfig("config: key '" + key + "' holds '" + it->second +
                        "', not a boolean (true/false/1/0)");
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  // Canonical rendering: sorted "key=value" lines. std::map keeps the keys
  // ordered, so iteration order is already canonical.
  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) {
      out += k;
      out += '=';
      out += v;
      out += '\n';
    }
    return out;
  }

  // 16 lowercase hex digits of the canonical text's FNV-1a hash.
  std::string fingerprint() const {
    static const char* hex = "0123456789abcdef";
    std::uint64_t h = fnv1a64(to_text());
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
      out[std::size_t(i)] = hex[h & 0xF];
      h >>= 4;
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r'))
    --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace detail

inline Config parse_config(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    require_config(eq != std::string::npos,
                   "config: line " + std::to_string(lineno) +
                       " has no '=': " + stripped);
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    require_config(!key.empty(), "config: line " + std::to_string(lineno) +
                                     " has an empty key");
    cfg.set(key, value);
  }
  return cfg;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw IoError("config: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

inline void save_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out.good()) throw IoError("cannot write " + path);
  out << text;
  if (!out.good()) throw IoError("short write to " + path);
}

}  // namespace io
}  // namespace vdst
