/*
 * Copyright 2026 The circnet Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "circnet/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace circnet {
namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::pair<std::string, std::string> split_assignment(const std::string& line,
                                                     const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
  }
  std::string key = trim(line.substr(0, eq));
  std::string value = trim(line.substr(eq + 1));
  if (key.empty()) throw ConfigError(where + ": empty key");
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' ||
          c == '-')) {
      throw ConfigError(where + ": invalid character in key '" + key + "'");
    }
  }
  return {key, value};
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto [key, value] = split_assignment(line, origin + ":" + std::to_string(number));
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void Config::set_override(const std::string& assignment) {
  auto [key, value] = split_assignment(assignment, "--set");
  values_[key] = value;
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

void Config::apply_env() {
  if (const char* seed = std::getenv("CIRC_SEED"); seed && *seed) {
    parse_number<std::uint64_t>("CIRC_SEED", seed);
    values_["seed"] = seed;
  }
}

const std::string* Config::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void Config::note_default(const std::string& key, const std::string& value) const {
  defaults_.emplace(key, value);
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

}  // namespace

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto* v = find(key);
  if (!v) note_default(key, fallback);
  return v ? *v : fallback;
}

std::string Config::require_string(const std::string& key) const {
  const auto* v = find(key);
  if (!v) throw ConfigError("missing required config key '" + key + "'");
  return *v;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const auto* v = find(key);
  if (!v) note_default(key, std::to_string(fallback));
  return v ? parse_number<std::int64_t>(key, *v) : fallback;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  const auto* v = find(key);
  if (!v) note_default(key, std::to_string(fallback));
  return v ? parse_number<std::size_t>(key, *v) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto* v = find(key);
  if (!v) note_default(key, std::to_string(fallback));
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto* v = find(key);
  if (!v) {
    note_default(key, format_double(fallback));
    return fallback;
  }
  // from_chars for double is missing on some toolchains; strtod is exact enough.
  char* end = nullptr;
  const double d = std::strtod(v->c_str(), &end);
  if (v->empty() || end != v->c_str() + v->size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + *v + "'");
  }
  return d;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) {
    note_default(key, fallback ? "true" : "false");
    return fallback;
  }
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<std::string> Config::get_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  const auto* v = find(key);
  if (!v) {
    note_default(key, join(fallback));
    return fallback;
  }
  std::vector<std::string> out;
  std::stringstream in(*v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
  if (!has(key)) {
    std::vector<std::string> text;
    for (double d : fallback) text.push_back(format_double(d));
    note_default(key, join(text));
    return fallback;
  }
  std::vector<double> out;
  for (const auto& item : get_list(key, {})) {
    char* end = nullptr;
    const double d = std::strtod(item.c_str(), &end);
    if (end != item.c_str() + item.size()) {
      throw ConfigError("config key '" + key + "': cannot parse '" + item + "'");
    }
    out.push_back(d);
  }
  return out;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_) {
    if (!used_.count(key)) out.push_back(key);
  }
  return out;
}

std::string Config::snapshot() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

std::string Config::resolved_snapshot() const {
  std::map<std::string, std::string> merged = defaults_;
  for (const auto& [key, value] : values_) merged[key] = value;
  std::string out;
  for (const auto& [key, value] : merged) out += key + " = " + value + "\n";
  return out;
}

}  // namespace circnet
