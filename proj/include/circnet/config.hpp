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

// Flat `key = value` configuration with `#` comments and dotted keys.

#ifndef CIRCNET_CONFIG_HPP_
#define CIRCNET_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace circnet {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text, const std::string& origin = "<text>");
  static Config load(const std::filesystem::path& path);

  // "key=value" as given to --set.
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  // Replaces `seed` with CIRC_SEED when that variable is set.
  void apply_env();

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // Keys present but never read.
  std::vector<std::string> unused_keys() const;
  // Sorted `key = value` lines; parses back to an identical Config.
  std::string snapshot() const;
  // Like snapshot() but also lists every default that was read, so the file
  // pins the full resolved setting.
  std::string resolved_snapshot() const;

 private:
  const std::string* find(const std::string& key) const;
  void note_default(const std::string& key, const std::string& value) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
  mutable std::map<std::string, std::string> defaults_;
};

}  // namespace circnet

#endif  // CIRCNET_CONFIG_HPP_
