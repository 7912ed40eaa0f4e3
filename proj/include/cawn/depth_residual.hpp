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

// Block attention residuals. Layers accumulate into a partial stream; at
// block boundaries the stream is archived and reset to zero. Each sub-layer
// reads a softmax-over-depth mixture of the archived blocks and the current
// partial stream, scored per position by a learned pseudo-query.

#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "cawn/tensor.hpp"

namespace cawn {

/// One attention-residual instance.
struct DepthQuery {
  Tensor query;    // [D, 1]
  Tensor key_gain; // [D], RMSNorm gain for the keys

  static DepthQuery init(std::size_t dim, double std_dev, std::mt19937_64 &rng);
};

class StreamArchive {
public:
  /// The partial stream starts as the embedding output.
  explicit StreamArchive(Tensor initial);

  const std::vector<Tensor> &blocks() const { return blocks_; }
  const Tensor &partial() const { return partial_; }
  std::size_t size() const { return blocks_.size(); }

  /// X_partial += delta.
  void accumulate(const Tensor &delta);
  /// Archive X_partial and reset it to zero.
  void sever();

private:
  std::vector<Tensor> blocks_;
  Tensor partial_;
};

/// Depth mixing weights [rows, n + 1] over (archived blocks..., partial).
Tensor depth_weights(const StreamArchive &archive, const DepthQuery &q);

/// h_t = sum_n softmax_n(RMSNorm(V_n,t) . w_q / sqrt(D)) V_n,t.
Tensor attend_depth(const StreamArchive &archive, const DepthQuery &q);

} // namespace cawn
