#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowdistill::cli {

// Bad config file, unknown key or malformed value. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat dotted-key configuration. Text files hold `key = value` lines with `#`
// comments and optional `[section]` headers that prefix following keys. JSON
// objects are flattened to the same dotted keys.
class Config {
 public:
  static Config parse_text(const std::string& text);
  static Config parse_json(const std::string& text);
  // JSON when the file ends in .json or starts with '{'.
  static Config load(const std::filesystem::path& path);

  // Layers `overrides` on top of the schema defaults and rejects unknown keys.
  static Config with_defaults(const Config& overrides);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string str(const std::string& key) const;
  double num(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;  // non-negative integer
  bool flag(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;  // comma separated
  std::vector<double> num_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // Canonical `key = value` text, sorted by key.
  std::string to_text() const;
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::string> values_;
};

struct SchemaEntry {
  const char* key;
  const char* value;
  const char* help;
};

const std::vector<SchemaEntry>& config_schema();

// Defaults with help comments, grouped by section.
std::string schema_text();

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace flowdistill::cli
