/*
 * Copyright 2026 The guidex Authors.
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

#pragma once

// Flat key/value configuration with a TOML-compatible subset grammar:
//   # comment
//   [section]          -> prefixes following keys with "section."
//   key = 12 | 1.5e-3 | true | "text"
// Resolution order: built-in defaults < config file < explicit overrides.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

namespace guidex {

using ConfigValue = std::variant<std::int64_t, double, bool, std::string>;

enum class ConfigSource { kDefault, kFile, kOverride };

class Config {
 public:
  // Every recognised key with its built-in default.
  static Config defaults();

  // Throws ValidationError on syntax errors or unknown keys.
  void merge_toml(std::string_view text);
  void load_file(const std::string& path);
  // "key=value" with the value parsed as a TOML scalar, falling back to a
  // bare string.
  void apply_override(std::string_view assignment);
  void set(const std::string& key, ConfigValue value, ConfigSource source = ConfigSource::kOverride);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  ConfigSource source(const std::string& key) const;

  nlohmann::json to_json() const;
  // Same keys with "source" annotations, as echoed into run manifests.
  nlohmann::json resolved_echo() const;
  std::string to_toml() const;

 private:
  struct Entry {
    ConfigValue value;
    ConfigSource source = ConfigSource::kDefault;
  };
  const Entry& entry(const std::string& key) const;
  std::map<std::string, Entry> entries_;
};

ConfigValue parse_config_scalar(std::string_view text, bool allow_bare = false);

}  // namespace guidex
