#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cpmap {

/// Flat key/value configuration.
///
/// Text form is INI-like: `key = value` lines, `# comments`, and optional
/// `[section]` headers that prefix following keys as `section.key`.
class Config {
 public:
  static Config parse(std::string_view text, const std::string& origin = "<string>");
  static Config load(const std::filesystem::path& path);

  /// Applies a `key=value` override.
  void set(std::string_view assignment);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void erase(const std::string& key) { values_.erase(key); }

  // Typed getters throw ValidationError(key) when missing or malformed.
  std::string str(const std::string& key) const;
  double real(const std::string& key) const;
  long integer(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

  std::string str(const std::string& key, const std::string& fallback) const;
  double real(const std::string& key, double fallback) const;
  long integer(const std::string& key, long fallback) const;
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<double> reals(const std::string& key, std::vector<double> fallback) const;

  /// Rejects any key not listed in `allowed`.
  void require_known(const std::vector<std::string>& allowed) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  /// Canonical `key = value` text, sorted by key.
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Worker count: `requested` if > 0, else the OpenMP default, capped by the
/// CPMAP_THREADS environment variable when set. Applies it to OpenMP.
int configure_threads(int requested = 0);

}  // namespace cpmap
