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

// Temporal syntax cache: width-3 causal depth-wise convolution over time,
// clamp to [-50, 50], SiLU. The two most recent inputs are carried between
// calls so token-at-a-time decoding matches a full-sequence pass.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cawn/tensor.hpp"

namespace cawn {

inline constexpr std::size_t kTemporalWidth = 3;

struct ConvHistory {
  std::size_t dim = 0;
  std::vector<double> rows; // 2 x dim, oldest first

  static ConvHistory zero(std::size_t dim);
  bool operator==(const ConvHistory &) const = default;
};

struct TemporalOutput {
  Tensor x;
  std::vector<ConvHistory> history; // one per lane
};

/// `h` is [lanes * T, D]; `kernel` is [D, 3]; `history` holds one entry per
/// lane or is empty for a fresh sequence.
TemporalOutput temporal_forward(const Tensor &h, const Tensor &kernel, std::size_t lanes,
                                std::span<const ConvHistory> history,
                                double bound = 50.0);

} // namespace cawn
