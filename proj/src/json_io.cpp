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

#include "cawn/json_io.hpp"

#include <fstream>
#include <sstream>

namespace cawn {

namespace {
const nlohmann::json kEmpty = nlohmann::json::object();
}

JsonReader::JsonReader(const nlohmann::json &object, std::string prefix)
    : object_(object.is_null() ? kEmpty : object), prefix_(std::move(prefix)) {
  if (!object_.is_object()) {
    throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "must be an object");
  }
}

std::string JsonReader::path(const std::string &key) const {
  return prefix_.empty() ? key : prefix_ + "." + key;
}

JsonReader JsonReader::child(const std::string &key) {
  used_.insert(key);
  return JsonReader(object_.contains(key) ? object_.at(key) : kEmpty, path(key));
}

void JsonReader::finish() const {
  for (const auto &item : object_.items()) {
    if (!used_.count(item.key())) {
      throw ConfigError(path(item.key()), "unknown key");
    }
  }
}

void apply_override(nlohmann::json &root, const std::string &dotted, const std::string &value) {
  nlohmann::json *node = &root;
  std::stringstream parts(dotted);
  std::string part;
  std::vector<std::string> keys;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) {
      throw ConfigError(dotted, "malformed override path");
    }
    keys.push_back(part);
  }
  if (keys.empty()) {
    throw ConfigError(dotted, "malformed override path");
  }
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    if (!node->contains(keys[i])) {
      (*node)[keys[i]] = nlohmann::json::object();
    }
    node = &(*node)[keys[i]];
    if (!node->is_object()) {
      throw ConfigError(dotted, "override descends into a non-object");
    }
  }
  nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
  (*node)[keys.back()] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
}

nlohmann::json read_json_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError(path, "is not valid JSON");
  }
  return j;
}

void write_text_file(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) {
    throw IoError("cannot write " + path);
  }
}

} // namespace cawn
