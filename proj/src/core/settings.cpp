#include "uprm/core/settings.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "uprm/errors.hpp"

namespace uprm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Settings::Settings(const SettingSchema& schema) : schema_(schema) {
  for (const auto& s : schema_) entries_[s.key] = Entry{s.default_value, "default"};
}

void Settings::set(const std::string& key, const std::string& value, const std::string& origin) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(origin + ": unknown setting '" + key + "'");
  it->second = Entry{value, origin};
}

void Settings::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = path.string() + ":" + std::to_string(number);
    std::string text = line;
    bool quoted = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] == '"') quoted = !quoted;
      if (text[i] == '#' && !quoted) {
        text.resize(i);
        break;
      }
    }
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + text + "'");
    const std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    set(key, value, where);
  }
}

const Settings::Entry& Settings::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("setting '" + key + "' is not part of this command");
  return it->second;
}

void Settings::fail(const std::string& key, const std::string& expected) const {
  const auto& e = entry(key);
  throw ConfigError(e.origin + ": setting '" + key + "' expects " + expected + ", got '" + e.value + "'");
}

bool Settings::has(const std::string& key) const { return !entry(key).value.empty(); }
const std::string& Settings::origin(const std::string& key) const { return entry(key).origin; }

std::string Settings::get_string(const std::string& key) const { return entry(key).value; }

std::optional<std::string> Settings::get_optional(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return entry(key).value;
}

double Settings::get_double(const std::string& key) const {
  const std::string& v = entry(key).value;
  if (v.empty()) fail(key, "a number");
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d)) fail(key, "a finite number");
  return d;
}

std::optional<double> Settings::get_optional_double(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return get_double(key);
}

std::int64_t Settings::get_int(const std::string& key) const {
  const std::string& v = entry(key).value;
  if (v.empty()) fail(key, "an integer");
  char* end = nullptr;
  errno = 0;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE) fail(key, "an integer");
  return i;
}

std::uint64_t Settings::get_u64(const std::string& key) const {
  const std::string& v = entry(key).value;
  if (v.empty() || v.front() == '-') fail(key, "a non-negative integer");
  char* end = nullptr;
  errno = 0;
  const unsigned long long i = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE) fail(key, "a non-negative integer");
  return i;
}

bool Settings::get_bool(const std::string& key) const {
  const std::string& v = entry(key).value;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(key, "true or false");
}

nlohmann::json Settings::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, e] : entries_) {
    if (!e.value.empty()) j[k] = e.value;
  }
  return j;
}

std::string Settings::to_file_text() const {
  std::ostringstream out;
  for (const auto& [k, e] : entries_) {
    if (!e.value.empty()) out << k << " = \"" << e.value << "\"\n";
  }
  return out.str();
}

}  // namespace uprm
