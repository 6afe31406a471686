#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ugnn {

/// Line-oriented `key=value` text. `#` comments and blank lines are ignored;
/// duplicate keys and malformed lines are rejected with file and line.
struct Config {
  std::map<std::string, std::string> entries;

  static Config parse_file(const std::string& path);
  static Config parse_text(const std::string& text,
                           const std::string& origin = "<config>");

  bool has(const std::string& key) const {
    return entries.find(key) != entries.end();
  }
};

/// Typed view over a Config that aggregates problems instead of failing on
/// the first one: finish() throws a single error listing every missing key,
/// malformed value, and unknown key.
struct ConfigReader {
  explicit ConfigReader(const Config& c) : cfg(c) {}

  std::string str(const std::string& key);
  std::string str_or(const std::string& key, const std::string& def);
  double real(const std::string& key);
  double real_or(const std::string& key, double def);
  /// Like real() but also rejects values <= 0; returns a harmless placeholder
  /// on any problem so construction can proceed until finish() reports it.
  double positive_real(const std::string& key);
  std::int64_t integer(const std::string& key);
  std::int64_t integer_or(const std::string& key, std::int64_t def);
  std::uint64_t seed_or(const std::string& key, std::uint64_t def);
  bool flag_or(const std::string& key, bool def);

  /// One-of validation on a string key with a default.
  std::string choice_or(const std::string& key, const std::string& def,
                        const std::vector<std::string>& allowed);

  void finish(const std::string& context);

 private:
  const Config& cfg;
  std::vector<std::string> missing;
  std::vector<std::string> malformed;
  std::vector<std::string> touched;

  const std::string* fetch(const std::string& key);
};

}  // namespace ugnn
