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

// Causal phase accumulation: gated phasor pushes, per-step complex rotation
// with retention, bounded state, and a hand-written reverse-time backward.
//
// For channel j and step t:
//   P_r[t] = p_r[t] + g[t] (P_r[t-1] cos th_j - P_i[t-1] sin th_j)
//   P_i[t] = p_i[t] + g[t] (P_r[t-1] sin th_j + P_i[t-1] cos th_j)
// then both components are clamped to [-bound, bound] before feeding t + 1.
// P[-1] is the carried state (zero at sequence start).

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cawn/tensor.hpp"
#include "cawn/wave_gates.hpp"

namespace cawn {

/// Accumulated complex wave state for one layer and one sequence.
struct PhaseState {
  std::uint32_t heads = 0;
  std::uint32_t harmonics = 0;
  std::vector<double> real;
  std::vector<double> imag;

  static PhaseState zero(WaveShape shape);
  std::size_t channels() const { return real.size(); }

  /// 8-byte header (H, K as little-endian u32) then P_r and P_i as
  /// little-endian f32. Size depends on (H, K) only.
  std::string serialize() const;
  static PhaseState deserialize(std::span<const char> bytes);
  static std::size_t serialized_size(WaveShape shape);

  bool operator==(const PhaseState &) const = default;
};

/// theta_j = 10000^(-2j / J) radians per step, j in [0, J).
std::vector<double> rotation_schedule(std::size_t channels);

struct PushPair {
  Tensor real; // a * beta * cos(phi), [rows, H*K]
  Tensor imag; // a * beta * sin(phi)
};

PushPair build_push(const WaveParams &params, WaveShape shape);

struct ScanOptions {
  double state_bound = 100.0;
  double grad_bound = 100.0;
};

struct ScanOutput {
  Tensor real; // [lanes * T, J]
  Tensor imag;
  std::vector<PhaseState> final_states; // one per lane, detached
};

/// Differentiable scan. Inputs are [lanes * T, J], lane-major. `init` holds
/// one state per lane or is empty for the zero boundary condition.
ScanOutput scan_forward(const Tensor &push_real, const Tensor &push_imag,
                        const Tensor &retention, std::span<const double> theta,
                        std::size_t lanes, std::span<const PhaseState> init,
                        WaveShape shape, const ScanOptions &opts = {});

/// Z = [P_r | P_i] along the feature axis.
Tensor synthesize(const Tensor &real, const Tensor &imag);

namespace scan {

/// Raw single-lane forward over T x J row-major buffers. Writes post-clamp
/// rows into out_real / out_imag. With `f32_storage` every stored row is
/// rounded to float before it feeds the next step.
void forward(std::span<const double> push_real, std::span<const double> push_imag,
             std::span<const double> retention, std::span<const double> theta,
             std::span<const double> init_real, std::span<const double> init_imag,
             double bound, std::span<double> out_real, std::span<double> out_imag,
             bool f32_storage = false);

struct Gradients {
  std::vector<double> push_real;
  std::vector<double> push_imag;
  std::vector<double> retention;
  std::vector<double> init_real;
  std::vector<double> init_imag;
};

/// Reverse-time recurrence for one lane. `saved_*` are the forward rows
/// (post-clamp). The state clamp is treated as identity; the returned push
/// and retention gradients are each clipped to [-grad_bound, grad_bound].
Gradients backward(std::span<const double> saved_real, std::span<const double> saved_imag,
                   std::span<const double> retention, std::span<const double> theta,
                   std::span<const double> init_real, std::span<const double> init_imag,
                   std::span<const double> grad_real, std::span<const double> grad_imag,
                   double grad_bound);

} // namespace scan

} // namespace cawn
