#include "cdqn/toml.hpp"

#include <cctype>
#include <cstdlib>
#include <sstream>

namespace cdqn::toml {
namespace {

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  std::ostringstream os;
  os << origin << ":" << line << ": " << msg;
  throw ConfigError(os.str());
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Drops a trailing comment that is not inside a string literal.
std::string_view strip_comment(std::string_view s) {
  bool in_str = false;
  char quote = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      if (c == quote) in_str = false;
    } else if (c == '"' || c == '\'') {
      in_str = true;
      quote = c;
    } else if (c == '#') {
      return s.substr(0, i);
    }
  }
  return s;
}

bool valid_bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  }
  return true;
}

class Parser {
 public:
  Parser(const std::string& text, const std::string& origin) : origin_(origin) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines_.push_back(line);
  }

  Document run() {
    Document doc;
    doc.origin = origin_;
    Table* current = nullptr;
    std::string current_name;

    for (lineno_ = 1; lineno_ <= static_cast<int>(lines_.size()); ++lineno_) {
      std::string_view raw = lines_[lineno_ - 1];
      std::string_view s = trim(strip_comment(raw));
      if (s.empty()) continue;

      if (s.starts_with("[[")) {
        if (!s.ends_with("]]")) fail(origin_, lineno_, "unterminated table-array header");
        std::string name(trim(s.substr(2, s.size() - 4)));
        if (!valid_bare_key(name)) fail(origin_, lineno_, "invalid table-array name '" + name + "'");
        if (doc.tables.count(name)) fail(origin_, lineno_, "'" + name + "' already defined as a table");
        doc.table_arrays[name].push_back(Table{{}, lineno_});
        current = &doc.table_arrays[name].back();
        current_name = name;
        continue;
      }
      if (s.starts_with("[")) {
        if (!s.ends_with("]")) fail(origin_, lineno_, "unterminated table header");
        std::string name(trim(s.substr(1, s.size() - 2)));
        if (!valid_bare_key(name)) fail(origin_, lineno_, "invalid table name '" + name + "'");
        if (doc.tables.count(name)) fail(origin_, lineno_, "duplicate table [" + name + "]");
        if (doc.table_arrays.count(name)) fail(origin_, lineno_, "'" + name + "' already defined as a table array");
        current = &doc.tables[name];
        current->line = lineno_;
        current_name = name;
        continue;
      }

      auto eq = s.find('=');
      if (eq == std::string_view::npos) fail(origin_, lineno_, "expected 'key = value'");
      std::string key(trim(s.substr(0, eq)));
      if (!valid_bare_key(key)) fail(origin_, lineno_, "invalid key '" + key + "'");
      if (current == nullptr) fail(origin_, lineno_, "key '" + key + "' outside of any [table]");
      if (current->has(key)) fail(origin_, lineno_, "duplicate key '" + key + "' in [" + current_name + "]");

      std::string value_text(trim(s.substr(eq + 1)));
      // Arrays may span lines; accumulate until brackets balance.
      int start_line = lineno_;
      while (bracket_balance(value_text) > 0 && lineno_ < static_cast<int>(lines_.size())) {
        ++lineno_;
        value_text += ' ';
        value_text += trim(strip_comment(lines_[lineno_ - 1]));
      }
      if (bracket_balance(value_text) != 0) fail(origin_, start_line, "unbalanced '[' in value");

      current->values[key] = parse_value(value_text, start_line);
    }
    return doc;
  }

 private:
  static int bracket_balance(std::string_view s) {
    int depth = 0;
    bool in_str = false;
    char quote = 0;
    for (char c : s) {
      if (in_str) {
        if (c == quote) in_str = false;
      } else if (c == '"' || c == '\'') {
        in_str = true;
        quote = c;
      } else if (c == '[') {
        ++depth;
      } else if (c == ']') {
        --depth;
      }
    }
    return depth;
  }

  Value parse_value(std::string_view text, int line) {
    text = trim(text);
    if (text.empty()) fail(origin_, line, "missing value");
    Value v;
    v.line = line;

    if (text.front() == '"' || text.front() == '\'') {
      if (text.size() < 2 || text.back() != text.front())
        fail(origin_, line, "unterminated string");
      v.kind = Value::Kind::String;
      v.str = std::string(text.substr(1, text.size() - 2));
      return v;
    }
    if (text.front() == '[') {
      if (text.back() != ']') fail(origin_, line, "unterminated array");
      v.kind = Value::Kind::Array;
      std::string_view body = trim(text.substr(1, text.size() - 2));
      while (!body.empty()) {
        std::size_t i = 0;
        int depth = 0;
        for (; i < body.size(); ++i) {
          if (body[i] == '[') ++depth;
          if (body[i] == ']') --depth;
          if (body[i] == ',' && depth == 0) break;
        }
        v.array.push_back(parse_value(body.substr(0, i), line));
        body = i < body.size() ? trim(body.substr(i + 1)) : std::string_view{};
      }
      return v;
    }
    if (text == "true" || text == "false") {
      v.kind = Value::Kind::Boolean;
      v.boolean = (text == "true");
      return v;
    }

    std::string num(text);
    char* end = nullptr;
    bool looks_float = num.find_first_of(".eE") != std::string::npos &&
                       !(num.size() > 1 && (num[0] == '0' && (num[1] == 'x' || num[1] == 'X')));
    if (looks_float) {
      v.kind = Value::Kind::Float;
      v.real = std::strtod(num.c_str(), &end);
    } else {
      v.kind = Value::Kind::Integer;
      v.integer = std::strtoll(num.c_str(), &end, 10);
    }
    if (end == nullptr || *end != '\0')
      fail(origin_, line, "cannot parse value '" + num + "'");
    return v;
  }

  std::string origin_;
  std::vector<std::string> lines_;
  int lineno_ = 0;
};

}  // namespace

double Value::as_number() const {
  if (kind == Kind::Integer) return static_cast<double>(integer);
  if (kind == Kind::Float) return real;
  throw ConfigError("value at line " + std::to_string(line) + " is not a number");
}

const Value& Table::at(const std::string& key, const std::string& origin) const {
  auto it = values.find(key);
  if (it == values.end())
    throw ConfigError(origin + ":" + std::to_string(line) + ": missing required key '" + key + "'");
  return it->second;
}

Document parse(const std::string& text, const std::string& origin) {
  return Parser(text, origin).run();
}

}  // namespace cdqn::toml
