#pragma once

#include <map>
#include <string>
#include <vector>

#include "radmap/geometry.hpp"

namespace radmap {

// Minimal INI dialect: [section] headers, key = value pairs, # or ;
// comments. Section names may repeat a dotted prefix ([source.0],
// [source.1]); sections keep file order.
struct IniSection {
  std::string name;
  std::map<std::string, std::string> entries;

  bool has(const std::string& key) const { return entries.count(key) != 0; }

  const std::string& require(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;

  double require_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;

  long require_int(const std::string& key) const;
  long get_int(const std::string& key, long fallback) const;

  bool get_bool(const std::string& key, bool fallback) const;

  Vec3 require_vec3(const std::string& key) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;
};

struct IniFile {
  std::vector<IniSection> sections;

  const IniSection* find(const std::string& name) const;
  const IniSection& require(const std::string& name) const;
  std::vector<const IniSection*> with_prefix(const std::string& prefix) const;
};

IniFile parse_ini(const std::string& text, const std::string& origin = "<string>");
IniFile load_ini(const std::string& path);

}  // namespace radmap
