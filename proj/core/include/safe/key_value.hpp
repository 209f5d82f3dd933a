#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace safe {

/// One `key = value` line. Blank lines and lines starting with '#' are
/// skipped; whitespace around keys and values is trimmed.
struct KeyValueEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

class KeyValueError : public std::runtime_error {
 public:
  KeyValueError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Throws KeyValueError on a line without '=', an empty key, or a
/// duplicated key.
std::vector<KeyValueEntry> parse_key_values(std::string_view text, const std::string& source = "<config>");
std::vector<KeyValueEntry> load_key_values(const std::filesystem::path& path);

/// Typed value conversions; each throws std::invalid_argument naming the key.
std::uint64_t parse_unsigned(const KeyValueEntry& entry);
double parse_real(const KeyValueEntry& entry);
bool parse_bool(const KeyValueEntry& entry);
/// Comma-separated unsigned integers.
std::vector<std::size_t> parse_unsigned_list(const KeyValueEntry& entry);

}  // namespace safe
