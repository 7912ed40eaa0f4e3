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

#include <algorithm>
#include <cmath>
#include <random>

#include "cawn/harmonic_ear.hpp"
#include "cawn/ops.hpp"
#include "doctest.h"
#include "grad_check.hpp"

using namespace cawn;
using cawn::testing::grad_check;
using cawn::testing::random_tensor;
using cawn::testing::random_weights;

namespace {

EarWeights random_ear(WaveShape shape, std::size_t dim, std::size_t ear_dim,
                      std::mt19937_64 &rng) {
  EarWeights w;
  w.kernel = random_tensor({2 * shape.heads, 3}, rng);
  w.projection = random_tensor({2 * shape.channels(), 2 * ear_dim}, rng);
  w.output = random_tensor({ear_dim, dim}, rng);
  return w;
}

Tensor identity_taps(std::size_t channels) {
  std::vector<double> k(channels * 3, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    k[c * 3 + 1] = 1.0;
  }
  return Tensor::from({channels, 3}, std::move(k));
}

// Straight-line loops for the three stages.
std::vector<double> reference(const Tensor &z, const EarWeights &w, WaveShape shape) {
  const std::size_t rows = z.dim(0), channels = 2 * shape.heads, kn = shape.harmonics;
  const std::size_t width = z.dim(1), ear = w.output.dim(0), dim = w.output.dim(1);
  std::vector<double> out(rows * dim, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> conv(width, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t k = 0; k < kn; ++k) {
        double acc = 0.0;
        for (int i = -1; i <= 1; ++i) {
          const long src = static_cast<long>(k) + i;
          if (src >= 0 && src < static_cast<long>(kn)) {
            acc += w.kernel.at(c, static_cast<std::size_t>(i + 1)) *
                   z.at(r, c * kn + static_cast<std::size_t>(src));
          }
        }
        conv[c * kn + k] = acc;
      }
    }
    std::vector<double> mixed(ear);
    for (std::size_t e = 0; e < ear; ++e) {
      double act = 0.0, gate = 0.0;
      for (std::size_t i = 0; i < width; ++i) {
        act += conv[i] * w.projection.at(i, e);
        gate += conv[i] * w.projection.at(i, ear + e);
      }
      mixed[e] = act / (1.0 + std::exp(-act)) * gate;
    }
    for (std::size_t d = 0; d < dim; ++d) {
      for (std::size_t e = 0; e < ear; ++e) {
        out[r * dim + d] += mixed[e] * w.output.at(e, d);
      }
    }
  }
  return out;
}

} // namespace

TEST_CASE("zero gate silences the ear") {
  std::mt19937_64 rng(31);
  const WaveShape shape{2, 4};
  EarWeights w = random_ear(shape, 5, 6, rng);
  auto p = w.projection.mutable_data();
  for (std::size_t i = 0; i < w.projection.dim(0); ++i) {
    for (std::size_t e = 6; e < 12; ++e) {
      p[i * 12 + e] = 0.0;
    }
  }
  const Tensor z = random_tensor({3, 16}, rng, -1, 1, false);
  for (double v : ear_forward(z, w, shape).to_vector()) {
    CHECK(v == 0.0);
  }
}

TEST_CASE("identity taps pass the wave state through") {
  std::mt19937_64 rng(32);
  const Tensor z = random_tensor({2, 16}, rng, -1, 1, false);
  const Tensor conv = depthwise_conv_same(z, identity_taps(4), 4, 4);
  CHECK(conv.to_vector() == z.to_vector());

  // Permuting harmonics permutes the convolved positions identically.
  std::vector<std::size_t> perm{2, 0, 3, 1};
  auto permute = [&](const std::vector<double> &v) {
    std::vector<double> out(v.size());
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t k = 0; k < 4; ++k) {
          out[r * 16 + c * 4 + k] = v[r * 16 + c * 4 + perm[k]];
        }
      }
    }
    return out;
  };
  const Tensor zp = Tensor::from({2, 16}, permute(z.to_vector()));
  CHECK(depthwise_conv_same(zp, identity_taps(4), 4, 4).to_vector() ==
        permute(conv.to_vector()));
}

TEST_CASE("ear matches a reference composition") {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(600 + seed);
    const WaveShape shape{2, 4};
    const EarWeights w = random_ear(shape, 3, 5, rng);
    const Tensor z = random_tensor({2, 16}, rng, -1, 1, false);
    const auto got = ear_forward(z, w, shape).to_vector();
    const auto want = reference(z, w, shape);
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(std::abs(got[i] - want[i]) < 1e-12);
    }
  }
}

TEST_CASE("ear init") {
  std::mt19937_64 rng(33);
  const EarWeights w = EarWeights::init({2, 8}, 16, 16, 3, 0.0, 0.0, rng);
  CHECK(w.kernel.to_vector() == identity_taps(4).to_vector());
  CHECK(w.projection.shape() == Shape{32, 32});
  CHECK(w.output.shape() == Shape{16, 16});
  CHECK_THROWS_AS(EarWeights::init({2, 8}, 16, 16, 4, 0.02, 0.02, rng), ConfigError);
  CHECK_THROWS_AS(ear_forward(Tensor::zeros({1, 15}), w, {2, 8}), ShapeError);
}

TEST_CASE("ear gradients") {
  double worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(700 + seed);
    const WaveShape shape{2, 3};
    EarWeights w = random_ear(shape, 3, 4, rng);
    Tensor z = random_tensor({3, 12}, rng);
    const auto r = random_weights(9, rng);
    auto loss = [&] { return weighted_sum(ear_forward(z, w, shape), r); };
    worst = std::max(worst,
                     grad_check({z, w.kernel, w.projection, w.output}, loss).max_rel_err);
  }
  INFO("worst relative error " << worst);
  CHECK(worst < 1e-4);
}
