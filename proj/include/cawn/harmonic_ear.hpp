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

// Convolutional SwiGLU "ear": maps the synthesized wave Z [rows, 2HK] back
// to the hidden width. Z is viewed as 2H channels of K harmonic positions.

#pragma once

#include <cstddef>
#include <random>

#include "cawn/tensor.hpp"
#include "cawn/wave_gates.hpp"

namespace cawn {

struct EarWeights {
  Tensor kernel;     // [2H, k_e], depth-wise over harmonics
  Tensor projection; // [2HK, 2 * D_ear], columns [act | gate]
  Tensor output;     // [D_ear, D]

  /// The kernel starts as a centre-tap identity plus N(0, std) noise; the
  /// output map uses `out_std` (depth-scaled).
  static EarWeights init(WaveShape shape, std::size_t dim, std::size_t ear_dim,
                         std::size_t kernel_width, double std_dev, double out_std,
                         std::mt19937_64 &rng);
};

Tensor ear_forward(const Tensor &z, const EarWeights &w, WaveShape shape);

} // namespace cawn
