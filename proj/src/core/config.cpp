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

#include "core/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <sstream>

#include "core/errors.hpp"
#include "core/tensor_io.hpp"

namespace guidex {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

const char* source_name(ConfigSource s) {
  switch (s) {
    case ConfigSource::kDefault:
      return "default";
    case ConfigSource::kFile:
      return "file";
    case ConfigSource::kOverride:
      return "override";
  }
  return "default";
}

nlohmann::json value_json(const ConfigValue& v) {
  return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

std::string value_toml(const ConfigValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return nlohmann::json(*s).dump();
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  std::ostringstream os;
  os.precision(17);
  os << std::get<double>(v);
  std::string s = os.str();
  if (s.find_first_of(".eE") == std::string::npos && s.find("inf") == std::string::npos &&
      s.find("nan") == std::string::npos) {
    s += ".0";
  }
  return s;
}

}  // namespace

ConfigValue parse_config_scalar(std::string_view text, bool allow_bare) {
  text = trim(text);
  if (text.empty()) throw ValidationError("config: empty value");
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') throw ValidationError("config: unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < text.size(); ++i) {
      if (text[i] == '\\' && i + 2 < text.size()) {
        const char n = text[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        out += text[i];
      }
    }
    return out;
  }
  if (text == "true") return true;
  if (text == "false") return false;
  std::string cleaned;
  for (char c : text) {
    if (c != '_') cleaned += c;
  }
  std::int64_t iv = 0;
  auto [p, ec] = std::from_chars(cleaned.data(), cleaned.data() + cleaned.size(), iv);
  if (ec == std::errc() && p == cleaned.data() + cleaned.size()) return iv;
  char* end = nullptr;
  const double dv = std::strtod(cleaned.c_str(), &end);
  if (end && *end == '\0' && !cleaned.empty()) return dv;
  if (allow_bare) return std::string(text);
  throw ValidationError("config: cannot parse value '" + std::string(text) + "'");
}

Config Config::defaults() {
  Config c;
  auto d = [&c](const std::string& k, ConfigValue v) { c.entries_[k] = Entry{std::move(v), ConfigSource::kDefault}; };
  using I = std::int64_t;
  d("seed", I{7});
  d("data.dir", std::string{"data"});

  d("world.num_scenes", I{2});
  d("world.num_behaviors", I{4});
  d("world.scene_allowed", std::string{});
  d("world.actors_per_video", I{1});
  d("world.video_length", I{32});
  d("world.frame_height", I{64});
  d("world.frame_width", I{64});
  d("world.joints", I{8});
  d("world.train_videos", I{32});
  d("world.test_videos", I{48});
  d("world.rate_motion", 0.2);
  d("world.rate_appearance", 0.2);
  d("world.rate_scene", 0.2);
  d("world.train_rate_motion", 0.0);
  d("world.train_rate_appearance", 0.0);
  d("world.train_rate_scene", 0.0);
  d("world.background_contrast", 0.12);

  d("model.clip_length", I{8});
  d("model.dim", I{128});
  d("model.depth", I{4});
  d("model.heads", I{4});
  d("model.mlp_ratio", I{4});
  d("model.c_b", I{128});
  d("model.c_app", I{64});
  d("model.c_s", I{64});
  d("model.head_hidden", I{128});
  d("model.l_lsta", I{2});
  d("model.lka_kernel", I{21});
  d("model.lka_dilation", I{3});
  d("model.n_b", I{20});
  d("model.n_s", I{10});
  d("model.n_r", I{20});
  d("model.flow_steps", I{8});
  d("model.flow_hidden", I{16});

  d("flow.epochs", I{30});
  d("flow.lr", 5e-3);
  d("flow.batch", I{16});
  d("flow.stride", I{1});

  d("train.alpha", 1.0);
  d("train.beta", 0.1);
  d("train.epsilon", 1.0);
  d("train.lr", 1e-3);
  d("train.epochs", I{20});
  d("train.batch", I{8});
  d("train.stride", I{2});
  d("train.mask_ratio", 0.5);
  d("train.grad_clip", 5.0);
  d("train.device", std::string{"cpu"});
  d("train.matching_init", std::string{"random"});
  d("train.memory_init", std::string{"random"});
  d("train.resume", false);
  d("train.session_epochs", I{0});

  d("score.lambda_app", 1.0);
  d("score.lambda_mm", 0.5);
  d("score.lambda_mode", std::string{"fixed"});
  d("score.normalize", std::string{"global"});
  d("score.stride", I{1});
  return c;
}

void Config::merge_toml(std::string_view text) {
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!valid_key(section)) throw ValidationError(where + "bad section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ValidationError(where + "expected key = value");
    std::string key(trim(line.substr(0, eq)));
    if (!valid_key(key)) throw ValidationError(where + "bad key '" + key + "'");
    if (!section.empty()) key = section + "." + key;
    ConfigValue v;
    try {
      v = parse_config_scalar(line.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    set(key, std::move(v), ConfigSource::kFile);
  }
}

void Config::load_file(const std::string& path) {
  std::string text;
  try {
    text = io::read_text_file(path);
  } catch (const DataError&) {
    throw ValidationError("cannot read config file: " + path);
  }
  merge_toml(text);
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ValidationError("override must be key=value: " + std::string(assignment));
  const std::string key(trim(assignment.substr(0, eq)));
  set(key, parse_config_scalar(assignment.substr(eq + 1), true), ConfigSource::kOverride);
}

void Config::set(const std::string& key, ConfigValue value, ConfigSource source) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ValidationError("unknown config key: " + key);
  // Keep the declared type; integers may widen into doubles.
  const ConfigValue& old = it->second.value;
  if (std::holds_alternative<double>(old)) {
    if (const auto* i = std::get_if<std::int64_t>(&value)) value = static_cast<double>(*i);
  }
  if (std::holds_alternative<std::string>(old) && !std::holds_alternative<std::string>(value)) {
    value = std::visit(
        [](const auto& x) -> std::string {
          std::ostringstream os;
          os << std::boolalpha << x;
          return os.str();
        },
        value);
  }
  if (old.index() != value.index()) throw ValidationError("config key " + key + ": wrong value type");
  it->second = Entry{std::move(value), source};
}

const Config::Entry& Config::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ValidationError("unknown config key: " + key);
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  const auto& v = entry(key).value;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  throw ValidationError("config key " + key + " is not an integer");
}

double Config::get_double(const std::string& key) const {
  const auto& v = entry(key).value;
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw ValidationError("config key " + key + " is not a number");
}

bool Config::get_bool(const std::string& key) const {
  const auto& v = entry(key).value;
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  throw ValidationError("config key " + key + " is not a boolean");
}

std::string Config::get_string(const std::string& key) const {
  const auto& v = entry(key).value;
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw ValidationError("config key " + key + " is not a string");
}

ConfigSource Config::source(const std::string& key) const { return entry(key).source; }

nlohmann::json Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, e] : entries_) j[k] = value_json(e.value);
  return j;
}

nlohmann::json Config::resolved_echo() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, e] : entries_) j[k] = {{"value", value_json(e.value)}, {"source", source_name(e.source)}};
  return j;
}

std::string Config::to_toml() const {
  std::ostringstream os;
  std::string section;
  for (const auto& [k, e] : entries_) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) os << k << " = " << value_toml(e.value) << '\n';
  }
  for (const auto& [k, e] : entries_) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) continue;
    const std::string sec = k.substr(0, dot);
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    os << k.substr(dot + 1) << " = " << value_toml(e.value) << '\n';
  }
  return os.str();
}

}  // namespace guidex
