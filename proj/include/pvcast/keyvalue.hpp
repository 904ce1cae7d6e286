#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace pvcast {

/// Flat `key=value` text used by config files, manifests and checkpoint
/// headers. Lines starting with `#` and blank lines are ignored; keys are
/// unique and emitted in sorted order.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::filesystem::path& path);

  std::string str() const;
  void save(const std::filesystem::path& path) const;

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, std::string value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, bool value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set(const std::string& key, std::uint64_t value);

  /// Typed getters throw ConfigError when the key is missing or malformed.
  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  /// Copies every entry of `other`, prefixing keys with `prefix`.
  void merge(const KeyValues& other, const std::string& prefix = "");

 private:
  std::map<std::string, std::string> entries_;
};

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace pvcast
