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

// Checkpoints are directories holding `manifest.json` (config snapshot, step,
// tensor table) and `tensors.bin` (little-endian float32 values in manifest
// order). Loading then saving reproduces both files byte for byte.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cawn/json_io.hpp"
#include "cawn/model.hpp"

namespace cawn {

nlohmann::json to_json(const ModelConfig &config);
/// Overlays the keys present in `reader` onto `config`.
void read_model_config(JsonReader &reader, ModelConfig &config);

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0; // bytes into tensors.bin
};

struct CheckpointManifest {
  ModelConfig config;
  std::uint64_t step = 0;
  std::vector<CheckpointEntry> tensors;
  std::uint64_t blob_bytes = 0;
};

struct Checkpoint {
  ModelWeights weights;
  std::uint64_t step = 0;
};

void save_checkpoint(const std::string &dir, const ModelWeights &weights, std::uint64_t step);
/// Throws IoError when the directory or either file is missing or damaged.
Checkpoint load_checkpoint(const std::string &dir);
CheckpointManifest read_manifest(const std::string &dir);

} // namespace cawn
