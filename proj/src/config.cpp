#include "cpmap/config.hpp"

#include "cpmap/error.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cpmap {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool valid_key(std::string_view k) {
  return !k.empty() && std::all_of(k.begin(), k.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  });
}

double to_double(const std::string& key, std::string_view s) {
  s = trim(s);
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ValidationError(key, "key '" + key + "': expected a number, got '" + std::string(s) + "'");
  return v;
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& origin) {
  Config cfg;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + ": unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!section.empty() && !valid_key(section)) throw ParseError(where + ": bad section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(where + ": expected 'key = value'");
    const auto key = std::string(trim(line.substr(0, eq)));
    if (!valid_key(key)) throw ParseError(where + ": bad key '" + key + "'");
    cfg.set(section.empty() ? key : section + "." + key, std::string(trim(line.substr(eq + 1))));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ValidationError(std::string(assignment), "override '" + std::string(assignment) + "' is not key=value");
  const auto key = std::string(trim(assignment.substr(0, eq)));
  if (!valid_key(key)) throw ValidationError(key, "bad key '" + key + "'");
  set(key, std::string(trim(assignment.substr(eq + 1))));
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::string Config::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError(key, "missing required key '" + key + "'");
  return it->second;
}

double Config::real(const std::string& key) const {
  const double v = to_double(key, str(key));
  if (!std::isfinite(v)) throw ValidationError(key, "key '" + key + "' must be finite");
  return v;
}

long Config::integer(const std::string& key) const {
  const auto s = str(key);
  long v = 0;
  const auto t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty())
    throw ValidationError(key, "key '" + key + "': expected an integer, got '" + s + "'");
  return v;
}

std::uint64_t Config::u64(const std::string& key) const {
  const auto s = str(key);
  std::uint64_t v = 0;
  const auto t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty())
    throw ValidationError(key, "key '" + key + "': expected an unsigned integer, got '" + s + "'");
  return v;
}

bool Config::flag(const std::string& key) const {
  const auto s = str(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ValidationError(key, "key '" + key + "': expected a boolean, got '" + s + "'");
}

std::vector<double> Config::reals(const std::string& key) const {
  const auto s = str(key);
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    out.push_back(to_double(key, std::string_view(s).substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
  return has(key) ? str(key) : fallback;
}
double Config::real(const std::string& key, double fallback) const {
  return has(key) ? real(key) : fallback;
}
long Config::integer(const std::string& key, long fallback) const {
  return has(key) ? integer(key) : fallback;
}
std::uint64_t Config::u64(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? u64(key) : fallback;
}
bool Config::flag(const std::string& key, bool fallback) const {
  return has(key) ? flag(key) : fallback;
}
std::vector<double> Config::reals(const std::string& key, std::vector<double> fallback) const {
  return has(key) ? reals(key) : fallback;
}

void Config::require_known(const std::vector<std::string>& allowed) const {
  for (const auto& [k, v] : values_)
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ValidationError(k, "unknown key '" + k + "'");
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

int configure_threads(int requested) {
  int n = requested > 0 ? requested : omp_get_max_threads();
  if (const char* env = std::getenv("CPMAP_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  n = std::max(n, 1);
  omp_set_num_threads(n);
  return n;
}

}  // namespace cpmap
