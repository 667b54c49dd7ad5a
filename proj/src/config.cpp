#include "radmap/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "radmap/errors.hpp"

namespace radmap {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  double x;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ParseError("config: '" + key + "' is not a number: " + v);
  }
  if (trim(v.substr(pos)).size() != 0) {
    throw ParseError("config: '" + key + "' has trailing junk: " + v);
  }
  return x;
}

}  // namespace

const std::string& IniSection::require(const std::string& key) const {
  auto it = entries.find(key);
  if (it == entries.end()) {
    throw ParseError("config: [" + name + "] missing key '" + key + "'");
  }
  return it->second;
}

std::string IniSection::get(const std::string& key,
                            const std::string& fallback) const {
  auto it = entries.find(key);
  return it == entries.end() ? fallback : it->second;
}

double IniSection::require_double(const std::string& key) const {
  return parse_double(require(key), key);
}

double IniSection::get_double(const std::string& key, double fallback) const {
  auto it = entries.find(key);
  return it == entries.end() ? fallback : parse_double(it->second, key);
}

long IniSection::require_int(const std::string& key) const {
  const double x = require_double(key);
  const long n = static_cast<long>(x);
  if (static_cast<double>(n) != x) {
    throw ParseError("config: '" + key + "' is not an integer");
  }
  return n;
}

long IniSection::get_int(const std::string& key, long fallback) const {
  return entries.count(key) ? require_int(key) : fallback;
}

bool IniSection::get_bool(const std::string& key, bool fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  const std::string v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParseError("config: '" + key + "' is not a boolean: " + v);
}

Vec3 IniSection::require_vec3(const std::string& key) const {
  std::istringstream ss(require(key));
  double x, y, z;
  if (!(ss >> x >> y >> z)) {
    throw ParseError("config: '" + key + "' needs three numbers");
  }
  std::string rest;
  if (ss >> rest) {
    throw ParseError("config: '" + key + "' has trailing junk");
  }
  return Vec3(x, y, z);
}

Vec3 IniSection::get_vec3(const std::string& key, const Vec3& fallback) const {
  return entries.count(key) ? require_vec3(key) : fallback;
}

const IniSection* IniFile::find(const std::string& name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const IniSection& IniFile::require(const std::string& name) const {
  const IniSection* s = find(name);
  if (!s) throw ParseError("config: missing section [" + name + "]");
  return *s;
}

std::vector<const IniSection*> IniFile::with_prefix(
    const std::string& prefix) const {
  std::vector<const IniSection*> out;
  for (const auto& s : sections) {
    if (s.name.rfind(prefix, 0) == 0) out.push_back(&s);
  }
  return out;
}

IniFile parse_ini(const std::string& text, const std::string& origin) {
  IniFile file;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto cut = raw.find_first_of("#;");
    if (cut != std::string::npos) raw.erase(cut);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": malformed section header");
      }
      file.sections.push_back(IniSection{trim(line.substr(1, line.size() - 2)), {}});
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos || file.sections.empty()) {
      throw ParseError(origin + ":" + std::to_string(line_no) +
                       ": expected 'key = value' inside a section");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    file.sections.back().entries[key] = value;
  }
  return file;
}

IniFile load_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ini(ss.str(), path);
}

}  // namespace radmap
