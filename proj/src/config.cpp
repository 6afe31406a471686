#include "ugnn/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ugnn {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

Config Config::parse_text(const std::string& text, const std::string& origin) {
  Config c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": empty key");
    if (c.entries.count(key))
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": duplicate key '" + key + "'");
    c.entries[key] = value;
  }
  return c;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

const std::string* ConfigReader::fetch(const std::string& key) {
  if (std::find(touched.begin(), touched.end(), key) == touched.end())
    touched.push_back(key);
  auto it = cfg.entries.find(key);
  return it == cfg.entries.end() ? nullptr : &it->second;
}

std::string ConfigReader::str(const std::string& key) {
  const std::string* v = fetch(key);
  if (!v) {
    missing.push_back(key);
    return "";
  }
  return *v;
}

std::string ConfigReader::str_or(const std::string& key,
                                 const std::string& def) {
  const std::string* v = fetch(key);
  return v ? *v : def;
}

double ConfigReader::real(const std::string& key) {
  const std::string* v = fetch(key);
  if (!v) {
    missing.push_back(key);
    return 0.0;
  }
  char* end = nullptr;
  const double x = std::strtod(v->c_str(), &end);
  if (end == v->c_str() || *end != '\0') {
    malformed.push_back(key + "='" + *v + "' (real expected)");
    return 0.0;
  }
  return x;
}

double ConfigReader::positive_real(const std::string& key) {
  const std::string* v = fetch(key);
  if (!v) {
    missing.push_back(key);
    return 1.0;
  }
  char* end = nullptr;
  const double x = std::strtod(v->c_str(), &end);
  if (end == v->c_str() || *end != '\0' || !(x > 0.0)) {
    malformed.push_back(key + "='" + *v + "' (positive real expected)");
    return 1.0;
  }
  return x;
}

double ConfigReader::real_or(const std::string& key, double def) {
  const std::string* v = fetch(key);
  if (!v) return def;
  char* end = nullptr;
  const double x = std::strtod(v->c_str(), &end);
  if (end == v->c_str() || *end != '\0') {
    malformed.push_back(key + "='" + *v + "' (real expected)");
    return def;
  }
  return x;
}

std::int64_t ConfigReader::integer(const std::string& key) {
  const std::string* v = fetch(key);
  if (!v) {
    missing.push_back(key);
    return 0;
  }
  char* end = nullptr;
  const long long x = std::strtoll(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0') {
    malformed.push_back(key + "='" + *v + "' (integer expected)");
    return 0;
  }
  return x;
}

std::int64_t ConfigReader::integer_or(const std::string& key,
                                      std::int64_t def) {
  const std::string* v = fetch(key);
  if (!v) return def;
  char* end = nullptr;
  const long long x = std::strtoll(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0') {
    malformed.push_back(key + "='" + *v + "' (integer expected)");
    return def;
  }
  return x;
}

std::uint64_t ConfigReader::seed_or(const std::string& key,
                                    std::uint64_t def) {
  const std::string* v = fetch(key);
  if (!v) return def;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0') {
    malformed.push_back(key + "='" + *v + "' (seed expected)");
    return def;
  }
  return x;
}

bool ConfigReader::flag_or(const std::string& key, bool def) {
  const std::string* v = fetch(key);
  if (!v) return def;
  if (*v == "1" || *v == "true") return true;
  if (*v == "0" || *v == "false") return false;
  malformed.push_back(key + "='" + *v + "' (0/1/true/false expected)");
  return def;
}

std::string ConfigReader::choice_or(const std::string& key,
                                    const std::string& def,
                                    const std::vector<std::string>& allowed) {
  const std::string v = str_or(key, def);
  if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
    std::string opts;
    for (const std::string& a : allowed) {
      if (!opts.empty()) opts += "|";
      opts += a;
    }
    malformed.push_back(key + "='" + v + "' (one of " + opts + ")");
    return def;
  }
  return v;
}

void ConfigReader::finish(const std::string& context) {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : cfg.entries)
    if (std::find(touched.begin(), touched.end(), key) == touched.end())
      unknown.push_back(key);

  if (missing.empty() && malformed.empty() && unknown.empty()) return;
  std::string msg = "config (" + context + "):";
  auto join = [&](const char* label, const std::vector<std::string>& v) {
    if (v.empty()) return;
    msg += std::string(" ") + label + " ";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) msg += ", ";
      msg += v[i];
    }
    msg += ";";
  };
  join("missing keys:", missing);
  join("bad values:", malformed);
  join("unknown keys:", unknown);
  throw std::invalid_argument(msg);
}

}  // namespace ugnn
