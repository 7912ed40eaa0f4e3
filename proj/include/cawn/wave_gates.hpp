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

// Projection of the temporal state into per-head, per-harmonic wave
// parameters: amplitude, base phase, input valve and retention.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "cawn/tensor.hpp"

namespace cawn {

struct WaveShape {
  std::size_t heads = 0;
  std::size_t harmonics = 0;
  std::size_t channels() const { return heads * harmonics; }
};

/// Wave parameters for `rows` positions. Per-harmonic tensors are
/// [rows, H*K] with flat index h*K + k; the valve is per head, [rows, H].
struct WaveParams {
  Tensor amplitude;
  Tensor phase;
  Tensor valve;
  Tensor retention;

  /// False when any value is NaN or infinite.
  bool finite() const;
};

struct GateWeights {
  Tensor amplitude;    // [D, H*K]
  Tensor phase;        // [D, H*K]
  Tensor valve;        // [D, H]
  Tensor valve_bias;   // [1, H], starts at -3
  Tensor retention;    // [D, H]
  Tensor retention_bias; // [1, H], starts at -2

  static GateWeights init(std::size_t dim, WaveShape shape, double std_dev,
                          double valve_bias_init, double retention_bias_init,
                          std::mt19937_64 &rng);
};

/// b_k = 3 (1 - k / (K - 1)); a single harmonic gets 3.
Tensor frequency_bias(std::size_t harmonics);

/// [H, H*K] 0/1 matrix repeating each head value across its harmonics.
Tensor head_expansion(WaveShape shape);

WaveParams project_params(const Tensor &x, const GateWeights &w, WaveShape shape,
                          double eps, double amplitude_ceiling = 10.0);

/// Valve threshold schedule: ramps linearly from 0 to `eps_max` over the
/// first `ramp_frac` of training and stays there.
double anneal_epsilon(std::uint64_t step, std::uint64_t total_steps,
                      double eps_max = 1e-3, double ramp_frac = 0.05);

bool all_finite(const Tensor &t);

} // namespace cawn
