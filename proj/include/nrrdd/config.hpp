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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace nrrdd {

/// Flat `key = value` configuration. Lines starting with '#' are comments;
/// keys are dotted paths such as `refine.epsilon`.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// Applies one `key=value` assignment (the form taken by --set).
  void assign(const std::string& assignment);
  void merge(const KeyValueConfig& other);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  /// Entries whose key equals one of `keys` or starts with one of the
  /// prefixes ending in '.'.
  KeyValueConfig select(const std::vector<std::string>& keys) const;

  /// Canonical text: sorted `key = value` lines.
  std::string to_text() const;
  /// Short stable hex digest of to_text().
  std::string digest() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace nrrdd
