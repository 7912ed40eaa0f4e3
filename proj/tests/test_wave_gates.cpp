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

#include <cmath>
#include <random>

#include "cawn/ops.hpp"
#include "cawn/wave_gates.hpp"
#include "doctest.h"
#include "grad_check.hpp"

using namespace cawn;
using cawn::testing::grad_check;
using cawn::testing::random_tensor;
using cawn::testing::random_weights;

namespace {

double sigma(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Gates with all dense maps zero so the biases alone decide the output.
GateWeights zero_gates(std::size_t dim, WaveShape shape) {
  std::mt19937_64 rng(0);
  GateWeights w = GateWeights::init(dim, shape, 0.0, -3.0, -2.0, rng);
  return w;
}

} // namespace

TEST_CASE("frequency bias ramp") {
  auto b = frequency_bias(64).to_vector();
  CHECK(b[0] == 3.0);
  CHECK(b[63] == 0.0);
  CHECK(b[21] == doctest::Approx(3.0 * (1.0 - 21.0 / 63.0)).epsilon(1e-15));
  CHECK(frequency_bias(2).to_vector() == std::vector<double>{3.0, 0.0});
  CHECK(frequency_bias(1).to_vector() == std::vector<double>{3.0});
  CHECK_THROWS_AS(frequency_bias(0), ConfigError);
}

TEST_CASE("epsilon annealing") {
  CHECK(anneal_epsilon(0, 1000) == 0.0);
  CHECK(anneal_epsilon(50, 1000) == 0.001);
  CHECK(anneal_epsilon(25, 1000) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK(anneal_epsilon(900, 1000) == 0.001);
  CHECK_THROWS_AS(anneal_epsilon(0, 0), ConfigError);
}

TEST_CASE("projection examples") {
  const WaveShape shape{2, 4};
  GateWeights w = zero_gates(3, shape);
  const Tensor x = Tensor::zeros({1, 3});
  WaveParams p = project_params(x, w, shape, 1e-3);

  for (double a : p.amplitude.data()) {
    CHECK(a == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  for (double b : p.valve.data()) {
    CHECK(std::abs(b - 0.047426) < 1e-6);
  }
  for (std::size_t h = 0; h < 2; ++h) {
    CHECK(p.retention.at(0, h * 4) == doctest::Approx(sigma(1.0)).epsilon(1e-12));
    CHECK(p.retention.at(0, h * 4 + 3) == doctest::Approx(sigma(-2.0)).epsilon(1e-12));
    for (std::size_t k = 1; k < 4; ++k) {
      CHECK(p.retention.at(0, h * 4 + k) < p.retention.at(0, h * 4 + k - 1));
    }
  }

  // Amplitude logit 100 hits the ceiling.
  w.amplitude.mutable_data()[0] = 100.0;
  p = project_params(Tensor::from({1, 3}, {1.0, 0.0, 0.0}), w, shape, 1e-3);
  CHECK(p.amplitude.at(0, 0) == 10.0);
}

TEST_CASE("valve straight-through contract") {
  const WaveShape shape{1, 2};
  GateWeights w = zero_gates(1, shape);
  w.valve_bias.mutable_data()[0] = -9.0;
  Tensor x = Tensor::from({1, 1}, {0.0}, true);
  WaveParams p = project_params(x, w, shape, 1e-3);
  CHECK(p.valve.item() == 0.0);
  sum(p.valve).backward();
  const double expected = sigma(-9.0) * (1.0 - sigma(-9.0));
  CHECK(w.valve_bias.grad()[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(expected - 1.233e-4) < 1e-6);

  // Values at or above the threshold pass through unchanged.
  w.valve_bias.mutable_data()[0] = -3.0;
  p = project_params(Tensor::zeros({1, 1}), w, shape, 1e-3);
  CHECK(p.valve.item() == doctest::Approx(sigma(-3.0)).epsilon(1e-15));
}

TEST_CASE("parameter invariants on random inputs") {
  std::mt19937_64 rng(7);
  const WaveShape shape{3, 5};
  GateWeights w = GateWeights::init(6, shape, 1.0, -3.0, -2.0, rng);
  const Tensor x = random_tensor({40, 6}, rng, -2.0, 2.0, false);
  const double eps = 1e-3;
  WaveParams p = project_params(x, w, shape, eps);
  for (double a : p.amplitude.data()) {
    CHECK((a >= 0.0 && a <= 10.0));
  }
  for (double g : p.retention.data()) {
    CHECK((g > 0.0 && g < 1.0));
  }
  for (double b : p.valve.data()) {
    CHECK((b == 0.0 || (b >= eps && b < 1.0)));
  }
  CHECK(p.finite());
}

TEST_CASE("projection gradients") {
  const WaveShape shape{2, 3};
  const double eps = 1e-3;
  double worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(300 + seed);
    GateWeights w = GateWeights::init(4, shape, 0.5, -3.0, -2.0, rng);
    Tensor x = random_tensor({5, 4}, rng);
    // Keep the valve away from the STE discontinuity band.
    const WaveParams probe = project_params(x, w, shape, 0.0);
    bool near_band = false;
    for (double b : probe.valve.data()) {
      near_band |= std::abs(b - eps) < 1e-6;
    }
    if (near_band) {
      continue;
    }
    const auto wa = random_weights(5 * 6, rng);
    const auto wp = random_weights(5 * 6, rng);
    const auto wb = random_weights(5 * 2, rng);
    const auto wg = random_weights(5 * 6, rng);
    auto loss = [&] {
      WaveParams p = project_params(x, w, shape, eps);
      return add(add(weighted_sum(p.amplitude, wa), weighted_sum(p.phase, wp)),
                 add(weighted_sum(p.valve, wb), weighted_sum(p.retention, wg)));
    };
    worst = std::max(worst, grad_check({x, w.amplitude, w.phase, w.valve, w.valve_bias,
                                        w.retention, w.retention_bias},
                                       loss)
                                .max_rel_err);
  }
  INFO("worst relative error " << worst);
  CHECK(worst < 1e-4);
}
