// Copyright 2026 The nrrdd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nrrdd/config.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "nrrdd/binio.hpp"
#include "nrrdd/common.hpp"

namespace nrrdd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
  fail(ErrorCode::kConfig, "config key '" + key + "': '" + value + "' is not " + kind);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v, const char* kind) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, kind);
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, ErrorCode::kConfig,
            origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorCode::kMissingArtifact,
          "config file not found: " + path.string());
  return parse(read_text(path), path.string());
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  require(!key.empty() && key.find_first_of(" \t=#") == std::string::npos, ErrorCode::kConfig,
          "invalid config key '" + key + "'");
  entries_[key] = value;
}

void KeyValueConfig::assign(const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos, ErrorCode::kConfig,
          "override '" + assignment + "' must look like key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  const auto it = entries_.find(key);
  require(it != entries_.end(), ErrorCode::kConfig, "missing config key '" + key + "'");
  return it->second;
}

int KeyValueConfig::get_int(const std::string& key) const {
  return parse_number<int>(key, get(key), "an integer");
}

double KeyValueConfig::get_double(const std::string& key) const {
  return parse_number<double>(key, get(key), "a number");
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key), "an unsigned integer");
}

bool KeyValueConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<int>(key, item, "an integer list"));
  }
  return out;
}

KeyValueConfig KeyValueConfig::select(const std::vector<std::string>& keys) const {
  KeyValueConfig out;
  for (const auto& [k, v] : entries_)
    for (const auto& want : keys) {
      const bool prefix = !want.empty() && want.back() == '.';
      if (prefix ? k.rfind(want, 0) == 0 : k == want) {
        out.entries_[k] = v;
        break;
      }
    }
  return out;
}

std::string KeyValueConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

std::string KeyValueConfig::digest() const {
  const std::string text = to_text();
  const auto c = crc32({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", c);
  return buf;
}

}  // namespace nrrdd
