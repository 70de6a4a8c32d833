#include "layerfield/config.hpp"

#include <fstream>
#include <sstream>

namespace lf {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require_io(line.back() == ']', "config line " + std::to_string(lineno) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    require_io(eq != std::string::npos, "config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    require_io(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
    cfg.values_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream is(path);
  require_io(bool(is), "cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string Config::get_str(const std::string& key, const std::string& def) const {
  auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

double Config::get_num(const std::string& key, double def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    require_io(pos == it->second.size(), "");
    return v;
  } catch (...) {
    throw IoError("config key '" + key + "': expected a number, got '" + it->second + "'");
  }
}

int Config::get_int(const std::string& key, int def) const {
  const double v = get_num(key, double(def));
  require_io(v == double(int(v)), "config key '" + key + "': expected an integer");
  return int(v);
}

uint64_t Config::get_u64(const std::string& key, uint64_t def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  try {
    return std::stoull(it->second);
  } catch (...) {
    throw IoError("config key '" + key + "': expected an unsigned integer");
  }
}

bool Config::get_bool(const std::string& key, bool def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw IoError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

uint64_t Config::hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : canonical()) {
    h ^= uint64_t(uint8_t(c));
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace lf
