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

// The full network: tied embedding, resonance layers grouped into severed
// blocks, FFN sub-layers, final depth attention, final RMSNorm, tied head.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cawn/depth_residual.hpp"
#include "cawn/harmonic_ear.hpp"
#include "cawn/phase_accumulator.hpp"
#include "cawn/temporal_cache.hpp"
#include "cawn/tensor.hpp"
#include "cawn/wave_gates.hpp"

namespace cawn {

struct ModelConfig {
  std::size_t vocab = 259;
  std::size_t dim = 64;
  std::size_t layers = 4;
  std::size_t block_size = 2;
  std::size_t heads = 2;
  std::size_t harmonics = 16;
  std::size_t ffn_mult = 4;
  std::size_t ear_dim = 0; // 0 means dim
  std::size_t ear_kernel = 3;
  double dropout = 0.1;
  double init_std = 0.02;
  double valve_bias = -3.0;
  double retention_bias = -2.0;
  double amplitude_ceiling = 10.0;
  double temporal_bound = 50.0;
  double state_bound = 100.0;
  double grad_bound = 100.0;
  double eps_max = 1e-3;
  std::uint64_t seed = 1234;

  WaveShape wave() const { return {heads, harmonics}; }
  std::size_t ear_width() const { return ear_dim ? ear_dim : dim; }
  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
};

struct LayerWeights {
  DepthQuery wave_route;
  Tensor wave_norm; // [D]
  Tensor temporal_kernel; // [D, 3]
  GateWeights gates;
  EarWeights ear;
  DepthQuery ffn_route;
  Tensor ffn_norm; // [D]
  Tensor ffn_in;   // [D, ffn_mult * D]
  Tensor ffn_out;  // [ffn_mult * D, D]
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ModelWeights {
  ModelConfig config;
  Tensor embedding; // [vocab, D], shared with the LM head
  std::vector<LayerWeights> layers;
  DepthQuery final_route;
  Tensor final_norm;
  std::vector<double> theta; // rotation schedule, fixed

  /// Trainable tensors in a stable order; the tied embedding appears once.
  std::vector<NamedTensor> parameters() const;
  /// Independent copy with fresh leaf nodes.
  ModelWeights clone() const;
  /// Copy with gradients disabled, optionally rounded to 32-bit storage.
  ModelWeights frozen(Dtype dtype = Dtype::F64) const;
};

ModelWeights init_weights(const ModelConfig &config);
std::size_t count_params(const ModelWeights &weights);

/// Per-layer carried state for one sequence.
struct LayerState {
  PhaseState phase;
  ConvHistory conv;
  bool operator==(const LayerState &) const = default;
};
using SequenceState = std::vector<LayerState>;

SequenceState zero_state(const ModelConfig &config);

enum class Mode : std::uint8_t { Train, Eval };

struct ForwardOptions {
  Mode mode = Mode::Eval;
  double eps = 1e-3;              // valve threshold
  std::uint64_t dropout_seed = 0; // train mode only
};

struct TokenBatch {
  std::size_t lanes = 1;
  std::size_t steps = 0;
  std::vector<std::int32_t> ids; // lane-major, lanes * steps
};

struct ForwardResult {
  Tensor logits; // [lanes, T, vocab]
  std::vector<SequenceState> states; // per lane, detached
  bool finite = true;
};

/// `carried` holds one SequenceState per lane or is empty (zero state).
ForwardResult forward(const ModelWeights &weights, const TokenBatch &tokens,
                      std::span<const SequenceState> carried, const ForwardOptions &opts);

} // namespace cawn
