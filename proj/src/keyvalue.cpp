#include "pvcast/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "pvcast/errors.hpp"

namespace pvcast {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("value of '" + key + "' is not a valid number: '" + text + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

KeyValues KeyValues::parse(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", line_no);
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError("empty key", line_no);
    if (kv.has(key)) throw ParseError("duplicate key '" + key + "'", line_no);
    kv.entries_[key] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string KeyValues::str() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

void KeyValues::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << str();
}

void KeyValues::set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
void KeyValues::set(const std::string& key, double value) { entries_[key] = format_double(value); }
void KeyValues::set(const std::string& key, std::int64_t value) {
  entries_[key] = std::to_string(value);
}
void KeyValues::set(const std::string& key, std::uint64_t value) {
  entries_[key] = std::to_string(value);
}
void KeyValues::set(const std::string& key, bool value) { entries_[key] = value ? "true" : "false"; }

std::string KeyValues::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing key '" + key + "'");
  return it->second;
}

double KeyValues::get_double(const std::string& key) const {
  return parse_number<double>(key, get(key));
}
std::int64_t KeyValues::get_int(const std::string& key) const {
  return parse_number<std::int64_t>(key, get(key));
}
std::uint64_t KeyValues::get_uint(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key));
}
bool KeyValues::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("value of '" + key + "' is not a boolean: '" + v + "'");
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}
double KeyValues::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}
std::int64_t KeyValues::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}
std::uint64_t KeyValues::get_uint(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? get_uint(key) : fallback;
}
bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

void KeyValues::merge(const KeyValues& other, const std::string& prefix) {
  for (const auto& [k, v] : other.entries_) entries_[prefix + k] = v;
}

}  // namespace pvcast
