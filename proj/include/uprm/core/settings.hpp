#pragma once

// Flat key = value settings with provenance for error messages.
//
// File syntax: one "key = value" per line, '#' starts a comment, blank
// lines are ignored, values may be wrapped in double quotes. Keys use dots
// for grouping ("oracle.accuracy"). Every value remembers where it came
// from ("run.cfg:12", "--gamma", "default") so a bad value is reported at
// its source.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace uprm {

struct SettingSpec {
  std::string key;
  std::string default_value;  // empty means unset
  std::string help;
};

using SettingSchema = std::vector<SettingSpec>;

class Settings {
 public:
  /// All schema defaults, origin "default".
  explicit Settings(const SettingSchema& schema);

  /// Throws ConfigError (with "path:line") on syntax errors or keys outside
  /// the schema.
  void merge_file(const std::filesystem::path& path);
  /// Throws ConfigError for keys outside the schema.
  void set(const std::string& key, const std::string& value, const std::string& origin);

  bool has(const std::string& key) const;  // set and non-empty
  const std::string& origin(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::optional<std::string> get_optional(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::optional<double> get_optional_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Resolved key -> value map (unset keys omitted).
  nlohmann::json to_json() const;
  /// "key = value" lines, loadable by merge_file.
  std::string to_file_text() const;

  const SettingSchema& schema() const noexcept { return schema_; }

 private:
  struct Entry {
    std::string value;
    std::string origin;
  };
  const Entry& entry(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& expected) const;

  SettingSchema schema_;
  std::map<std::string, Entry> entries_;
};

}  // namespace uprm
