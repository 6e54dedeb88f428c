#pragma once

// Shared plumbing: error types, number formatting, the section/key/value
// text grammar used by every input file, and seeded random streams.

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace civitas {

inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed text input.
struct ParseError : Error {
  using Error::Error;
};

// Structurally invalid network / graph (dangling endpoint, duplicate id, cycle).
struct TopologyError : Error {
  using Error::Error;
};

// Argument outside its documented domain.
struct DomainError : Error {
  using Error::Error;
};

// ----------------------------------------------------------------------------
// Formatting
// ----------------------------------------------------------------------------

// Nine significant digits, '.' decimal point regardless of locale.
inline std::string fmt9(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ----------------------------------------------------------------------------
// String helpers
// ----------------------------------------------------------------------------

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Comma separated list; empty string gives an empty list.
inline std::vector<std::string> split_list(std::string_view s) {
  if (trim(s).empty()) return {};
  return split(s, ',');
}

inline double parse_double(std::string_view text, std::string_view what) {
  const std::string s(trim(text));
  if (s.empty()) throw ParseError("empty number for '" + std::string(what) + "'");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
    throw ParseError("bad number '" + s + "' for '" + std::string(what) + "'");
  return v;
}

inline long long parse_int(std::string_view text, std::string_view what) {
  const std::string s(trim(text));
  if (s.empty()) throw ParseError("empty integer for '" + std::string(what) + "'");
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || errno == ERANGE)
    throw ParseError("bad integer '" + s + "' for '" + std::string(what) + "'");
  return v;
}

inline bool parse_bool(std::string_view text, std::string_view what) {
  const auto s = trim(text);
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw ParseError("bad boolean '" + std::string(s) + "' for '" + std::string(what) + "'");
}

// ----------------------------------------------------------------------------
// Section / key / value grammar
//
//   # comment            (also after values: "key = 3  # note")
//   [section]            opens a new record; names may repeat
//   key = value          belongs to the most recent section
//
// Keys are unique within one section. Blank lines are ignored.
// ----------------------------------------------------------------------------

struct Section {
  std::string name;
  int line = 0;
  std::vector<std::pair<std::string, std::string>> entries;

  bool has(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return true;
    return false;
  }

  std::optional<std::string> find(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return v;
    return std::nullopt;
  }

  const std::string& get(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return v;
    throw ParseError(where() + ": missing key '" + std::string(key) + "'");
  }

  std::string get_or(std::string_view key, std::string fallback) const {
    auto v = find(key);
    return v ? *v : std::move(fallback);
  }

  double get_double(std::string_view key) const { return parse_double(get(key), key); }
  double get_double_or(std::string_view key, double fallback) const {
    auto v = find(key);
    return v ? parse_double(*v, key) : fallback;
  }
  long long get_int(std::string_view key) const { return parse_int(get(key), key); }
  long long get_int_or(std::string_view key, long long fallback) const {
    auto v = find(key);
    return v ? parse_int(*v, key) : fallback;
  }
  bool get_bool_or(std::string_view key, bool fallback) const {
    auto v = find(key);
    return v ? parse_bool(*v, key) : fallback;
  }
  std::vector<std::string> get_list(std::string_view key) const {
    auto v = find(key);
    return v ? split_list(*v) : std::vector<std::string>{};
  }

  std::string where() const { return "[" + name + "] at line " + std::to_string(line); }
};

inline std::vector<Section> parse_sections(std::string_view text) {
  std::vector<Section> out;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++lineno;

    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const auto line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ParseError("line " + std::to_string(lineno) + ": malformed section header");
      const auto name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) throw ParseError("line " + std::to_string(lineno) + ": empty section name");
      out.push_back(Section{std::string(name), lineno, {}});
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("line " + std::to_string(lineno) + ": expected 'key = value'");
    if (out.empty()) throw ParseError("line " + std::to_string(lineno) + ": key outside of a section");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("line " + std::to_string(lineno) + ": empty key");
    if (out.back().has(key))
      throw ParseError("line " + std::to_string(lineno) + ": duplicate key '" + std::string(key) + "'");
    out.back().entries.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<Section> load_sections(const std::string& path) { return parse_sections(read_file(path)); }

// ----------------------------------------------------------------------------
// Random streams
// ----------------------------------------------------------------------------

// SplitMix64 step; used to derive independent, reproducible child seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (stream * 0xD1B54A32D192ED03ull);
  splitmix64(s);
  return splitmix64(s);
}

// Uniform double in [0, 1) from a 64-bit engine, independent of the standard
// library's distribution implementations (keeps runs bit-identical across
// toolchains).
template <class Engine>
double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

template <class Engine>
double exponential(Engine& eng, double rate) {
  return -std::log1p(-uniform01(eng)) / rate;
}

}  // namespace civitas
