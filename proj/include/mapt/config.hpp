#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapt {

/// Raised for malformed or invalid experiment configuration; the message
/// names the offending [section] key.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Sectioned key-value configuration:
///
///   # comment
///   [section]
///   key = value
///   list_key = 1,2,3
///
/// Getters record which keys were consumed so the harness can reject
/// unrecognized (usually misspelled) keys.
class Config {
 public:
  static Config parse_string(const std::string& text, const std::string& origin = "<string>") {
    Config config;
    config.text_ = text;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty())
          throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
      const std::string full = section + "." + key;
      if (config.values_.count(full))
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key [" +
                          section + "] " + key);
      config.values_[full] = value;
    }
    return config;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_string(text, path);
  }

  const std::string& text() const { return text_; }

  bool has(const std::string& section, const std::string& key) const {
    return values_.count(section + "." + key) > 0;
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    used_.insert(section + "." + key);
    auto it = values_.find(section + "." + key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& section, const std::string& key, double fallback) const {
    const std::string raw = get_string(section, key, "");
    if (raw.empty()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("[" + section + "] " + key + ": not a number: '" + raw + "'");
    }
  }

  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const {
    const std::string raw = get_string(section, key, "");
    if (raw.empty()) return fallback;
    try {
      std::size_t pos = 0;
      const std::int64_t v = std::stoll(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("[" + section + "] " + key + ": not an integer: '" + raw + "'");
    }
  }

  std::vector<std::string> get_list(const std::string& section, const std::string& key) const {
    const std::string raw = get_string(section, key, "");
    std::vector<std::string> items;
    std::string item;
    std::istringstream in(raw);
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) items.push_back(item);
    }
    return items;
  }

  std::vector<std::int64_t> get_int_list(const std::string& section, const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const auto& item : get_list(section, key)) {
      try {
        out.push_back(std::stoll(item));
      } catch (const std::exception&) {
        throw ConfigError("[" + section + "] " + key + ": not an integer list entry: '" + item +
                          "'");
      }
    }
    return out;
  }

  /// Keys present in the file but never consumed by a getter.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [key, _] : values_)
      if (!used_.count(key)) out.push_back(key);
    return out;
  }

  void reject_unused() const {
    const auto unused = unused_keys();
    if (!unused.empty()) {
      std::string names;
      for (const auto& k : unused) names += (names.empty() ? "" : ", ") + k;
      throw ConfigError("unrecognized config keys: " + names);
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
  }

  std::string text_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace mapt
