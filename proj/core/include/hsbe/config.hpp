#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hsbe/velocity_grid.hpp"

namespace hsbe {

/// Flat key-value configuration. Keys inside a `[section]` header are stored as
/// "section.key"; `#` and `;` start comments.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// Applies "section.key=value".
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;

  /// Serializes back to the sectioned text form.
  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace hsbe
