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

#include "cawn/temporal_cache.hpp"

#include <algorithm>

#include "cawn/ops.hpp"

namespace cawn {

ConvHistory ConvHistory::zero(std::size_t dim) {
  return {dim, std::vector<double>((kTemporalWidth - 1) * dim, 0.0)};
}

TemporalOutput temporal_forward(const Tensor &h, const Tensor &kernel, std::size_t lanes,
                                std::span<const ConvHistory> history, double bound) {
  if (h.rank() != 2 || kernel.rank() != 2 || kernel.dim(0) != h.dim(1) ||
      kernel.dim(1) != kTemporalWidth) {
    throw ShapeError("temporal_forward: input " + shape_str(h.shape()) + " with kernel " +
                     shape_str(kernel.shape()));
  }
  const std::size_t dim = h.dim(1);
  if (!history.empty() && history.size() != lanes) {
    throw ShapeError("temporal_forward: " + std::to_string(history.size()) +
                     " histories for " + std::to_string(lanes) + " lanes");
  }
  const std::size_t pad = kTemporalWidth - 1;
  std::vector<double> context(lanes * pad * dim, 0.0);
  if (!history.empty()) {
    for (std::size_t b = 0; b < lanes; ++b) {
      if (history[b].rows.size() != pad * dim) {
        throw ShapeError("temporal_forward: history of " +
                         std::to_string(history[b].rows.size()) + " values, expected " +
                         std::to_string(pad * dim));
      }
      std::copy(history[b].rows.begin(), history[b].rows.end(),
                context.begin() + b * pad * dim);
    }
  }

  TemporalOutput out;
  const Tensor conv = causal_depthwise_conv1d(h, kernel, lanes, context);
  out.x = silu(clamp(conv, -bound, bound));

  // Roll the window: the new history is the last two rows of [context; h].
  const std::size_t steps = h.dim(0) / lanes;
  auto hv = h.data();
  for (std::size_t b = 0; b < lanes; ++b) {
    std::vector<double> window(context.begin() + b * pad * dim,
                               context.begin() + (b + 1) * pad * dim);
    window.insert(window.end(), hv.begin() + b * steps * dim,
                  hv.begin() + (b + 1) * steps * dim);
    ConvHistory next;
    next.dim = dim;
    next.rows.assign(window.end() - pad * dim, window.end());
    out.history.push_back(std::move(next));
  }
  return out;
}

} // namespace cawn
