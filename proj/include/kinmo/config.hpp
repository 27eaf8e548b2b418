#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace kinmo {

// Flat key=value configuration. Lines starting with '#' are comments.
class Config {
 public:
  static Config parse(std::string_view text, const std::string& source = "config");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value);
  void set(const std::string& key, int value) { set(key, static_cast<long long>(value)); }
  bool has(const std::string& key) const { return values_.contains(key); }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  long long get(const std::string& key, long long fallback) const;
  int get(const std::string& key, int fallback) const;

  // Keys sharing `prefix`, with the prefix kept.
  Config section(std::string_view prefix) const;
  void merge(const Config& other);
  // Throws ConfigError naming the first key not in `known`.
  void require_known(const std::set<std::string>& known) const;

  // Sorted "key=value" lines; the basis for digests.
  std::string canonical() const;
  std::uint64_t digest() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Shortest decimal text that round-trips a double.
std::string format_number(double v);

}  // namespace kinmo
