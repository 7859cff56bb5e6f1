#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dcomp::app {

/// Configuration or input problem detected before any sampling.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  std::string_view key;
  std::string_view default_value;
  std::string_view doc;
};

/// Every accepted key with its default. Unknown keys are rejected.
const std::vector<ConfigKey>& config_schema();

/// Flat `section.key = value` text. `#` starts a comment; blank lines are
/// ignored; a key may appear once.
class Config {
 public:
  static Config defaults();
  static Config parse(std::string_view text, std::string_view origin = "<config>");

  /// Throws ValidationError for unknown keys.
  void set(std::string_view key, std::string_view value);

  const std::string& raw(std::string_view key) const;
  std::string str(std::string_view key) const { return raw(key); }
  long long integer(std::string_view key) const;
  std::uint64_t u64(std::string_view key) const;
  double real(std::string_view key) const;
  bool boolean(std::string_view key) const;
  std::vector<long long> int_list(std::string_view key) const;
  std::vector<double> real_list(std::string_view key) const;

  /// `key = value` lines in schema order, for output headers.
  std::string echo(std::string_view prefix = "") const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace dcomp::app
