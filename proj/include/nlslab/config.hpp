#pragma once

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "nlslab/grid.hpp"

namespace nlslab {

/// Flat key/value configuration: the TOML subset of [section] headers,
/// `key = value` lines and `#` comments. Values are numbers (including
/// inf), booleans, double-quoted strings, or one-line arrays of numbers.
/// Keys are stored as "section.key".
class Config {
 public:
  using Value = std::variant<double, bool, std::string, std::vector<double>>;

  static Config parse(std::istream& is, const std::string& origin = "<config>") {
    Config cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::string body = trim(strip_comment(line));
      if (body.empty()) continue;
      const std::string where = origin + ":" + std::to_string(lineno);
      if (body.front() == '[') {
        if (body.back() != ']') throw Error(where + ": unterminated section header");
        section = trim(body.substr(1, body.size() - 2));
        if (section.empty()) throw Error(where + ": empty section name");
        continue;
      }
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw Error(where + ": expected key = value");
      const std::string key = trim(body.substr(0, eq));
      if (key.empty()) throw Error(where + ": missing key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (cfg.values_.count(full)) throw Error(where + ": duplicate key " + full);
      cfg.values_[full] = parse_value(trim(body.substr(eq + 1)), where);
    }
    return cfg;
  }

  static Config parse_string(const std::string& text) {
    std::istringstream is(text);
    return parse(is);
  }

  static Config load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("config: cannot open " + path);
    return parse(is, path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, Value v) { values_[key] = std::move(v); }
  const std::map<std::string, Value>& values() const { return values_; }

  double number(const std::string& key, double fallback) const { return get<double>(key, fallback, "a number"); }
  bool boolean(const std::string& key, bool fallback) const { return get<bool>(key, fallback, "a boolean"); }
  std::string string(const std::string& key, const std::string& fallback) const {
    return get<std::string>(key, fallback, "a string");
  }
  std::vector<double> array(const std::string& key, const std::vector<double>& fallback) const {
    return get<std::vector<double>>(key, fallback, "an array of numbers");
  }
  Vec3 vec3(const std::string& key, const Vec3& fallback) const {
    if (!has(key)) return fallback;
    const auto a = array(key, {});
    if (a.size() != 3) throw Error("config: " + key + " must have three entries");
    return {a[0], a[1], a[2]};
  }

 private:
  template <class T>
  T get(const std::string& key, const T& fallback, const char* what) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (const T* v = std::get_if<T>(&it->second)) return *v;
    throw Error("config: " + key + " must be " + what);
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  static double parse_number(const std::string& tok, const std::string& where) {
    const std::string t = trim(tok);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    if (t == "-inf") return -std::numeric_limits<double>::infinity();
    std::string clean;
    for (char c : t) {
      if (c != '_') clean += c;
    }
    if (!clean.empty() && clean.front() == '+') clean.erase(0, 1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(clean.data(), clean.data() + clean.size(), v);
    if (ec != std::errc() || ptr != clean.data() + clean.size() || clean.empty()) {
      throw Error(where + ": cannot parse number '" + t + "'");
    }
    return v;
  }

  static Value parse_value(const std::string& v, const std::string& where) {
    if (v.empty()) throw Error(where + ": missing value");
    if (v == "true") return true;
    if (v == "false") return false;
    if (v.front() == '"') {
      if (v.size() < 2 || v.back() != '"') throw Error(where + ": unterminated string");
      return v.substr(1, v.size() - 2);
    }
    if (v.front() == '[') {
      if (v.back() != ']') throw Error(where + ": arrays must close on the same line");
      std::vector<double> out;
      std::stringstream ss(v.substr(1, v.size() - 2));
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (trim(item).empty()) continue;
        out.push_back(parse_number(item, where));
      }
      return out;
    }
    return parse_number(v, where);
  }

  std::map<std::string, Value> values_;
};

}  // namespace nlslab
