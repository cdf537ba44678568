#include "sharppath/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace sharppath {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string strip_comment(const std::string& line) {
  bool in_quote = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quote = !in_quote;
    if (line[i] == '#' && !in_quote) return line.substr(0, i);
  }
  return line;
}

ConfigValue parse_scalar(const std::string& raw, const std::string& where) {
  ConfigValue v;
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    v.kind = ConfigValue::Kind::Str;
    v.s = raw.substr(1, raw.size() - 2);
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.kind = ConfigValue::Kind::Bool;
    v.b = raw == "true";
    return v;
  }
  // integer first, float as fallback
  {
    long long i = 0;
    const auto* first = raw.data();
    const auto* last = raw.data() + raw.size();
    const auto res = std::from_chars(first, last, i);
    if (res.ec == std::errc() && res.ptr == last) {
      v.kind = ConfigValue::Kind::Int;
      v.i = i;
      v.f = static_cast<double>(i);
      return v;
    }
  }
  try {
    size_t used = 0;
    const double f = std::stod(raw, &used);
    if (used == raw.size()) {
      v.kind = ConfigValue::Kind::Float;
      v.f = f;
      return v;
    }
  } catch (...) {
  }
  throw ConfigError(where + ": cannot parse value '" + raw + "'");
}

ConfigValue parse_value(const std::string& raw, const std::string& where) {
  if (!raw.empty() && raw.front() == '[') {
    if (raw.back() != ']')
      throw ConfigError(where + ": unterminated array");
    ConfigValue v;
    v.kind = ConfigValue::Kind::Array;
    const std::string body = raw.substr(1, raw.size() - 2);
    std::string item;
    bool in_quote = false;
    for (const char ch : body) {
      if (ch == '"') in_quote = !in_quote;
      if (ch == ',' && !in_quote) {
        const std::string t = trim(item);
        if (!t.empty()) v.arr.push_back(parse_scalar(t, where));
        item.clear();
      } else {
        item += ch;
      }
    }
    const std::string t = trim(item);
    if (!t.empty()) v.arr.push_back(parse_scalar(t, where));
    return v;
  }
  return parse_scalar(raw, where);
}

} // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_string(buf.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text,
                                    const std::string& origin) {
  ConfigFile cf;
  cf.origin_ = origin;
  std::string section;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string raw = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (raw.empty()) throw ConfigError(where + ": missing value for " + key);
    const std::string dotted = section.empty() ? key : section + "." + key;
    if (cf.entries_.count(dotted))
      throw ConfigError(where + ": duplicate key " + dotted);
    cf.entries_[dotted] = parse_value(raw, where);
  }
  return cf;
}

const ConfigValue* ConfigFile::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

bool ConfigFile::has(const std::string& key) const { return find(key) != nullptr; }

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  const ConfigValue* v = find(key);
  if (!v) return fallback;
  if (v->kind != ConfigValue::Kind::Bool)
    throw ConfigError(origin_ + ": " + key + " must be true or false");
  return v->b;
}

long long ConfigFile::get_int(const std::string& key, long long fallback) const {
  const ConfigValue* v = find(key);
  if (!v) return fallback;
  if (v->kind != ConfigValue::Kind::Int)
    throw ConfigError(origin_ + ": " + key + " must be an integer");
  return v->i;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  const ConfigValue* v = find(key);
  if (!v) return fallback;
  if (v->kind != ConfigValue::Kind::Float && v->kind != ConfigValue::Kind::Int)
    throw ConfigError(origin_ + ": " + key + " must be a number");
  return v->f;
}

std::string ConfigFile::get_string(const std::string& key,
                                   const std::string& fallback) const {
  const ConfigValue* v = find(key);
  if (!v) return fallback;
  if (v->kind != ConfigValue::Kind::Str)
    throw ConfigError(origin_ + ": " + key + " must be a quoted string");
  return v->s;
}

std::vector<double> ConfigFile::get_double_array(const std::string& key) const {
  const ConfigValue* v = find(key);
  if (!v) return {};
  if (v->kind != ConfigValue::Kind::Array)
    throw ConfigError(origin_ + ": " + key + " must be an array");
  std::vector<double> out;
  for (const auto& e : v->arr) {
    if (e.kind != ConfigValue::Kind::Float && e.kind != ConfigValue::Kind::Int)
      throw ConfigError(origin_ + ": " + key + " must hold numbers");
    out.push_back(e.f);
  }
  return out;
}

std::vector<long long> ConfigFile::get_int_array(const std::string& key) const {
  const ConfigValue* v = find(key);
  if (!v) return {};
  if (v->kind != ConfigValue::Kind::Array)
    throw ConfigError(origin_ + ": " + key + " must be an array");
  std::vector<long long> out;
  for (const auto& e : v->arr) {
    if (e.kind != ConfigValue::Kind::Int)
      throw ConfigError(origin_ + ": " + key + " must hold integers");
    out.push_back(e.i);
  }
  return out;
}

std::vector<std::string> ConfigFile::get_string_array(
    const std::string& key) const {
  const ConfigValue* v = find(key);
  if (!v) return {};
  if (v->kind != ConfigValue::Kind::Array)
    throw ConfigError(origin_ + ": " + key + " must be an array");
  std::vector<std::string> out;
  for (const auto& e : v->arr) {
    if (e.kind != ConfigValue::Kind::Str)
      throw ConfigError(origin_ + ": " + key + " must hold strings");
    out.push_back(e.s);
  }
  return out;
}

void ConfigFile::require_known(const std::vector<std::string>& allowed) const {
  for (const auto& [key, value] : entries_) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(origin_ + ": unknown key '" + key + "'");
  }
}

} // namespace sharppath
