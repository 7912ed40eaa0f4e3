// Copyright 2026 The CAWN Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Strict JSON field reading for configuration structs. Unknown keys and
// mistyped values are configuration errors naming the dotted field path.

#pragma once

#include <set>
#include <string>
#include <vector>

#include "cawn/error.hpp"
#include "json.hpp"

namespace cawn {

class JsonReader {
public:
  JsonReader(const nlohmann::json &object, std::string prefix);

  /// Reads `key` into `out` when present; absent keys keep the default.
  template <class T> void get(const std::string &key, T &out) {
    used_.insert(key);
    if (!object_.contains(key)) {
      return;
    }
    try {
      out = object_.at(key).get<T>();
    } catch (const nlohmann::json::exception &) {
      throw ConfigError(path(key), "has the wrong type");
    }
  }

  /// Sub-object reader; the key counts as consumed.
  JsonReader child(const std::string &key);
  bool has(const std::string &key) const { return object_.contains(key); }
  std::string path(const std::string &key) const;
  /// Throws for the first key that was never consumed.
  void finish() const;

private:
  nlohmann::json object_;
  std::string prefix_;
  std::set<std::string> used_;
};

/// Applies `a.b.c=value` overrides in place. The value text is parsed as
/// JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json &root, const std::string &dotted, const std::string &value);

nlohmann::json read_json_file(const std::string &path);
void write_text_file(const std::string &path, const std::string &text);

} // namespace cawn
