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

#include "cawn/harmonic_ear.hpp"

#include "cawn/ops.hpp"

namespace cawn {

EarWeights EarWeights::init(WaveShape shape, std::size_t dim, std::size_t ear_dim,
                            std::size_t kernel_width, double std_dev, double out_std,
                            std::mt19937_64 &rng) {
  if (kernel_width % 2 == 0) {
    throw ConfigError("model.ear_kernel", "must be odd");
  }
  std::normal_distribution<double> dist(0.0, std_dev);
  std::normal_distribution<double> out_dist(0.0, out_std);
  const std::size_t channels = 2 * shape.heads;

  std::vector<double> k(channels * kernel_width);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < kernel_width; ++i) {
      k[c * kernel_width + i] = (i == kernel_width / 2 ? 1.0 : 0.0) + dist(rng);
    }
  }
  std::vector<double> proj(2 * shape.channels() * 2 * ear_dim);
  for (auto &v : proj) {
    v = dist(rng);
  }
  std::vector<double> out(ear_dim * dim);
  for (auto &v : out) {
    v = out_dist(rng);
  }
  EarWeights w;
  w.kernel = Tensor::from({channels, kernel_width}, std::move(k), true);
  w.projection = Tensor::from({2 * shape.channels(), 2 * ear_dim}, std::move(proj), true);
  w.output = Tensor::from({ear_dim, dim}, std::move(out), true);
  return w;
}

Tensor ear_forward(const Tensor &z, const EarWeights &w, WaveShape shape) {
  const std::size_t channels = 2 * shape.heads;
  if (z.rank() != 2 || z.dim(1) != channels * shape.harmonics) {
    throw ShapeError("ear_forward: input " + shape_str(z.shape()) + " is not [rows, " +
                     std::to_string(channels * shape.harmonics) + "]");
  }
  const Tensor convolved = depthwise_conv_same(z, w.kernel, channels, shape.harmonics);
  const std::size_t half = w.projection.dim(1) / 2;
  auto streams = split(matmul(convolved, w.projection), {half, half}, 1);
  return matmul(mul(silu(streams[0]), streams[1]), w.output);
}

} // namespace cawn
