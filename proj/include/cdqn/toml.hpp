#pragma once

#include <map>
#include <string>
#include <vector>

#include "cdqn/util.hpp"

namespace cdqn::toml {

/// Minimal TOML reader covering the subset this project's config files use:
/// [table] and [[array-of-tables]] headers, bare keys, and integer / float /
/// boolean / basic-string / flat-array values. Nested tables and dotted keys
/// are not supported.
struct Value {
  enum class Kind { Integer, Float, Boolean, String, Array };
  Kind kind = Kind::Integer;
  long long integer = 0;
  double real = 0;
  bool boolean = false;
  std::string str;
  std::vector<Value> array;
  int line = 0;

  double as_number() const;  // Integer or Float, throws otherwise
};

struct Table {
  std::map<std::string, Value> values;
  int line = 0;

  bool has(const std::string& key) const { return values.count(key) != 0; }
  const Value& at(const std::string& key, const std::string& origin) const;
};

struct Document {
  std::map<std::string, Table> tables;
  std::map<std::string, std::vector<Table>> table_arrays;
  std::string origin;
};

Document parse(const std::string& text, const std::string& origin);

}  // namespace cdqn::toml
