#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace edr {

// Flat key=value configuration with dotted keys, '#' comments, blank lines
// ignored. Later assignments win, so CLI flags can be layered on top by
// re-setting keys.
struct Config {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) > 0; }

  const std::string& get(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) {
      throw std::runtime_error("config-missing-key: " + key);
    }
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    const auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }

  double get_double(const std::string& key) const {
    std::size_t pos = 0;
    const std::string& raw = get(key);
    const double v = std::stod(raw, &pos);
    if (pos != raw.size()) throw std::runtime_error("config-bad-number: " + key);
    return v;
  }

  long get_int(const std::string& key) const {
    std::size_t pos = 0;
    const std::string& raw = get(key);
    const long v = std::stol(raw, &pos);
    if (pos != raw.size()) throw std::runtime_error("config-bad-integer: " + key);
    return v;
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto begin = item.find_first_not_of(" \t");
      const auto end = item.find_last_not_of(" \t");
      if (begin != std::string::npos) out.push_back(item.substr(begin, end - begin + 1));
    }
    return out;
  }

  void set(const std::string& key, const std::string& value) {
    values[key] = value;
  }
};

inline Config parse_config(std::istream& in) {
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const auto end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config-parse-error: line " +
                               std::to_string(lineno) + " lacks '='");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw std::runtime_error("config-parse-error: line " +
                               std::to_string(lineno) + " has empty key");
    }
    cfg.set(key, trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config-open-failed: " + path);
  return parse_config(in);
}

}  // namespace edr
