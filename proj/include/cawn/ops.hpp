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

// Differentiable primitives. Unless noted otherwise, elementwise binary ops
// accept identical shapes or a 2-D right operand broadcast along rows
// ([1, n]), columns ([m, 1]) or both ([1, 1]).

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cawn/tensor.hpp"

namespace cawn {

Tensor matmul(const Tensor &a, const Tensor &b);
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &a, double factor);

Tensor concat(const std::vector<Tensor> &parts, std::size_t axis);
std::vector<Tensor> split(const Tensor &t, const std::vector<std::size_t> &sizes,
                          std::size_t axis);
Tensor reshape(const Tensor &t, Shape shape);
/// 2-D transpose.
Tensor transpose(const Tensor &t);

Tensor sigmoid(const Tensor &x);
Tensor tanh(const Tensor &x);
/// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))). This tanh form is the
/// definition used here, not an approximation of something else.
Tensor gelu(const Tensor &x);
Tensor silu(const Tensor &x);
Tensor softplus(const Tensor &x);
Tensor exp(const Tensor &x);
Tensor log(const Tensor &x);
Tensor sin(const Tensor &x);
Tensor cos(const Tensor &x);
Tensor softmax(const Tensor &x, std::size_t axis);

/// x / sqrt(mean(x^2) + eps) * gain over the last axis; gain has shape [D].
Tensor rms_norm(const Tensor &x, const Tensor &gain, double eps = 1e-6);

enum class ClampGrad : std::uint8_t {
  ZeroOutside, // gradient 0 where the forward value was clipped
  PassThrough, // identity gradient everywhere
  ClampGrad,   // identity, then the gradient itself clipped to [lo, hi]
};

Tensor clamp(const Tensor &x, double lo, double hi,
             ClampGrad policy = ClampGrad::ZeroOutside);

/// Forward zeroes values below `threshold`; backward is the identity.
Tensor ste_threshold(const Tensor &x, double threshold);

/// Depth-wise causal convolution over time. `x` is [lanes * T, C] with rows
/// lane-major; `kernel` is [C, W]. Output row t of a lane is
/// sum_i kernel[c, i] * x[t - (W - 1) + i, c]. Rows before the lane start come
/// from `left_context` ([lanes, W - 1, C] flattened, oldest first), or zero
/// when it is empty. The context is a constant.
Tensor causal_depthwise_conv1d(const Tensor &x, const Tensor &kernel,
                               std::size_t lanes,
                               std::span<const double> left_context = {});

/// Depth-wise convolution along a feature axis with symmetric zero padding.
/// `x` is [rows, C * L], laid out channel-major; `kernel` is [C, W], W odd.
Tensor depthwise_conv_same(const Tensor &x, const Tensor &kernel,
                           std::size_t channels, std::size_t length);

Tensor embedding_lookup(const Tensor &table, std::span<const std::int32_t> ids);

/// Mean token cross-entropy over rows of `logits` [N, V]. `mask`, when
/// given, selects contributing rows (non-zero = counted).
Tensor cross_entropy(const Tensor &logits, std::span<const std::int32_t> targets,
                     std::span<const std::uint8_t> mask = {});

Tensor sum(const Tensor &x);
Tensor mean(const Tensor &x);
/// sum(x * weights) with constant weights of identical size.
Tensor weighted_sum(const Tensor &x, std::span<const double> weights);

} // namespace cawn
