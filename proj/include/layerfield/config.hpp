#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "layerfield/common.hpp"

namespace lf {

// Flat plain-text configuration: `key = value` lines grouped under
// `[section]` headers, '#' comments. Keys are addressed as "section.key";
// every consumer supplies its own documented default.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& def) const;
  double get_num(const std::string& key, double def) const;
  int get_int(const std::string& key, int def) const;
  uint64_t get_u64(const std::string& key, uint64_t def) const;
  bool get_bool(const std::string& key, bool def) const;

  // Sorted "key=value" lines; the reproducibility stanza hashes this.
  std::string canonical() const;
  uint64_t hash() const;  // FNV-1a 64 over canonical()

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace lf
