#include "safe/key_value.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace safe {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const KeyValueEntry& e, const char* expected) {
  throw std::invalid_argument("line " + std::to_string(e.line) + ": '" + e.key + "' expects " + expected + ", got '" +
                              e.value + "'");
}

bool parse_u64(std::string_view s, std::uint64_t& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

KeyValueError::KeyValueError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

std::vector<KeyValueEntry> parse_key_values(std::string_view text, const std::string& source) {
  std::vector<KeyValueEntry> out;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw KeyValueError(source, line_no, "expected 'key = value'");
    KeyValueEntry e{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), line_no};
    if (e.key.empty()) throw KeyValueError(source, line_no, "empty key");
    if (!seen.insert(e.key).second) throw KeyValueError(source, line_no, "duplicate key '" + e.key + "'");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<KeyValueEntry> load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str(), path.string());
}

std::uint64_t parse_unsigned(const KeyValueEntry& entry) {
  std::uint64_t v = 0;
  if (!parse_u64(entry.value, v)) bad_value(entry, "a non-negative integer");
  return v;
}

double parse_real(const KeyValueEntry& entry) {
  const std::string s(trim(entry.value));
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    bad_value(entry, "a number");
  }
  if (used != s.size() || !std::isfinite(v)) bad_value(entry, "a finite number");
  return v;
}

bool parse_bool(const KeyValueEntry& entry) {
  if (entry.value == "true" || entry.value == "1") return true;
  if (entry.value == "false" || entry.value == "0") return false;
  bad_value(entry, "true or false");
}

std::vector<std::size_t> parse_unsigned_list(const KeyValueEntry& entry) {
  std::vector<std::size_t> out;
  std::string_view rest = entry.value;
  while (true) {
    const auto comma = rest.find(',');
    std::uint64_t v = 0;
    if (!parse_u64(rest.substr(0, comma), v)) bad_value(entry, "a comma-separated list of integers");
    out.push_back(static_cast<std::size_t>(v));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

}  // namespace safe
