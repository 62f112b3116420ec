#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bayatt {

/// Flat key=value configuration: UTF-8 lines, '#' comments, dotted section
/// prefixes. Later assignments win, so CLI overrides are plain set() calls.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text, const std::string& origin = "<string>");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  std::int64_t get_int(const std::string& key, std::int64_t def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::vector<std::string> get_list(const std::string& key) const;  // ';' or ',' separated

  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Sorted "key=value" lines; the fingerprint hashes this text.
  std::string canonical_text() const;
  std::uint64_t fingerprint() const;
  std::string fingerprint_hex() const;

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace bayatt
