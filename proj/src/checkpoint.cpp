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

#include "cawn/checkpoint.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace cawn {

namespace fs = std::filesystem;

namespace {

constexpr const char *kManifest = "manifest.json";
constexpr const char *kBlob = "tensors.bin";
constexpr const char *kFormat = "cawn-checkpoint";
constexpr int kVersion = 1;

void write_atomic(const fs::path &path, const std::string &bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw IoError("cannot write " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

} // namespace

nlohmann::json to_json(const ModelConfig &c) {
  return {{"vocab", c.vocab},
          {"dim", c.dim},
          {"layers", c.layers},
          {"block_size", c.block_size},
          {"heads", c.heads},
          {"harmonics", c.harmonics},
          {"ffn_mult", c.ffn_mult},
          {"ear_dim", c.ear_dim},
          {"ear_kernel", c.ear_kernel},
          {"dropout", c.dropout},
          {"init_std", c.init_std},
          {"valve_bias", c.valve_bias},
          {"retention_bias", c.retention_bias},
          {"amplitude_ceiling", c.amplitude_ceiling},
          {"temporal_bound", c.temporal_bound},
          {"state_bound", c.state_bound},
          {"grad_bound", c.grad_bound},
          {"eps_max", c.eps_max},
          {"seed", c.seed}};
}

void read_model_config(JsonReader &r, ModelConfig &c) {
  r.get("vocab", c.vocab);
  r.get("dim", c.dim);
  r.get("layers", c.layers);
  r.get("block_size", c.block_size);
  r.get("heads", c.heads);
  r.get("harmonics", c.harmonics);
  r.get("ffn_mult", c.ffn_mult);
  r.get("ear_dim", c.ear_dim);
  r.get("ear_kernel", c.ear_kernel);
  r.get("dropout", c.dropout);
  r.get("init_std", c.init_std);
  r.get("valve_bias", c.valve_bias);
  r.get("retention_bias", c.retention_bias);
  r.get("amplitude_ceiling", c.amplitude_ceiling);
  r.get("temporal_bound", c.temporal_bound);
  r.get("state_bound", c.state_bound);
  r.get("grad_bound", c.grad_bound);
  r.get("eps_max", c.eps_max);
  r.get("seed", c.seed);
  r.finish();
}

void save_checkpoint(const std::string &dir, const ModelWeights &weights, std::uint64_t step) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create checkpoint directory " + dir + ": " + ec.message());
  }
  std::string blob;
  nlohmann::json table = nlohmann::json::array();
  for (const auto &p : weights.parameters()) {
    table.push_back({{"name", p.name},
                     {"shape", p.tensor.shape()},
                     {"dtype", "f32"},
                     {"offset", blob.size()}});
    for (double v : p.tensor.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) {
        blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
      }
    }
  }
  const nlohmann::json manifest = {{"format", kFormat},
                                   {"version", kVersion},
                                   {"step", step},
                                   {"config", to_json(weights.config)},
                                   {"blob", kBlob},
                                   {"blob_bytes", blob.size()},
                                   {"tensors", table}};
  write_atomic(fs::path(dir) / kBlob, blob);
  write_atomic(fs::path(dir) / kManifest, manifest.dump(2) + "\n");
}

CheckpointManifest read_manifest(const std::string &dir) {
  const fs::path path = fs::path(dir) / kManifest;
  if (!fs::exists(path)) {
    throw IoError("no checkpoint manifest at " + path.string());
  }
  const nlohmann::json j = read_json_file(path.string());
  CheckpointManifest m;
  try {
    if (j.at("format").get<std::string>() != kFormat || j.at("version").get<int>() != kVersion) {
      throw IoError(path.string() + ": unsupported checkpoint format");
    }
    m.step = j.at("step").get<std::uint64_t>();
    m.blob_bytes = j.at("blob_bytes").get<std::uint64_t>();
    JsonReader cfg(j.at("config"), "config");
    read_model_config(cfg, m.config);
    for (const auto &t : j.at("tensors")) {
      if (t.at("dtype").get<std::string>() != "f32") {
        throw IoError(path.string() + ": unsupported tensor dtype");
      }
      m.tensors.push_back({t.at("name").get<std::string>(), t.at("shape").get<Shape>(),
                           t.at("offset").get<std::uint64_t>()});
    }
  } catch (const nlohmann::json::exception &e) {
    throw IoError(path.string() + ": malformed manifest (" + e.what() + ")");
  } catch (const ConfigError &e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return m;
}

Checkpoint load_checkpoint(const std::string &dir) {
  const CheckpointManifest m = read_manifest(dir);
  const fs::path blob_path = fs::path(dir) / kBlob;
  std::ifstream in(blob_path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + blob_path.string());
  }
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() != m.blob_bytes) {
    throw IoError(blob_path.string() + ": expected " + std::to_string(m.blob_bytes) +
                  " bytes, found " + std::to_string(blob.size()));
  }

  Checkpoint out;
  out.step = m.step;
  out.weights = init_weights(m.config);
  auto params = out.weights.parameters();
  if (params.size() != m.tensors.size()) {
    throw IoError(dir + ": tensor count does not match the model config");
  }
  for (std::size_t n = 0; n < params.size(); ++n) {
    const auto &entry = m.tensors[n];
    Tensor &t = params[n].tensor;
    if (entry.name != params[n].name || entry.shape != t.shape() ||
        entry.offset + 4 * t.numel() > blob.size()) {
      throw IoError(dir + ": tensor " + entry.name + " does not match the model config");
    }
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(
                    static_cast<unsigned char>(blob[entry.offset + 4 * i + b]))
                << (8 * b);
      }
      dst[i] = std::bit_cast<float>(bits);
    }
  }
  return out;
}

} // namespace cawn
