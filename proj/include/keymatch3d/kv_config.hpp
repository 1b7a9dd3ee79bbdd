#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace keymatch3d {

/// Flat `key=value` text file. Blank lines and lines starting with '#' are
/// skipped; surrounding whitespace is trimmed; a repeated key is an error.
class KeyValues {
 public:
  KeyValues() = default;

  static KeyValues parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Throws std::invalid_argument listing the first key not in `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

  const std::string& str(const std::string& key) const;
  std::string str(const std::string& key, const std::string& fallback) const;
  double real(const std::string& key) const;
  double real(const std::string& key, double fallback) const;
  long long integer(const std::string& key) const;
  long long integer(const std::string& key, long long fallback) const;
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) const;
  bool boolean(const std::string& key, bool fallback) const;

  /// Keys in sorted order, one `key=value` per line.
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
  std::string origin_ = "<config>";
};

/// Round-trippable decimal text for a double.
std::string format_real(double v);

}  // namespace keymatch3d
