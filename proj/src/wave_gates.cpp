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

#include "cawn/wave_gates.hpp"

#include <algorithm>
#include <cmath>

#include "cawn/ops.hpp"

namespace cawn {

namespace {

Tensor normal(Shape shape, double std_dev, std::mt19937_64 &rng) {
  std::normal_distribution<double> dist(0.0, std_dev);
  std::vector<double> values(numel(shape));
  for (auto &v : values) {
    v = dist(rng);
  }
  return Tensor::from(std::move(shape), std::move(values), true);
}

} // namespace

bool all_finite(const Tensor &t) {
  const auto v = t.data();
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool WaveParams::finite() const {
  return all_finite(amplitude) && all_finite(phase) && all_finite(valve) &&
         all_finite(retention);
}

GateWeights GateWeights::init(std::size_t dim, WaveShape shape, double std_dev,
                              double valve_bias_init, double retention_bias_init,
                              std::mt19937_64 &rng) {
  GateWeights w;
  w.amplitude = normal({dim, shape.channels()}, std_dev, rng);
  w.phase = normal({dim, shape.channels()}, std_dev, rng);
  w.valve = normal({dim, shape.heads}, std_dev, rng);
  w.valve_bias = Tensor::full({1, shape.heads}, valve_bias_init, true);
  w.retention = normal({dim, shape.heads}, std_dev, rng);
  w.retention_bias = Tensor::full({1, shape.heads}, retention_bias_init, true);
  return w;
}

Tensor frequency_bias(std::size_t harmonics) {
  if (harmonics == 0) {
    throw ConfigError("harmonics", "must be at least 1");
  }
  std::vector<double> bias(harmonics, 3.0);
  if (harmonics > 1) {
    for (std::size_t k = 0; k < harmonics; ++k) {
      bias[k] = 3.0 * (1.0 - static_cast<double>(k) / static_cast<double>(harmonics - 1));
    }
  }
  return Tensor::from({harmonics}, std::move(bias));
}

Tensor head_expansion(WaveShape shape) {
  std::vector<double> e(shape.heads * shape.channels(), 0.0);
  for (std::size_t h = 0; h < shape.heads; ++h) {
    for (std::size_t k = 0; k < shape.harmonics; ++k) {
      e[h * shape.channels() + h * shape.harmonics + k] = 1.0;
    }
  }
  return Tensor::from({shape.heads, shape.channels()}, std::move(e));
}

WaveParams project_params(const Tensor &x, const GateWeights &w, WaveShape shape,
                          double eps, double amplitude_ceiling) {
  const Tensor expand = head_expansion(shape);
  // b_k repeated for every head: [1, H*K].
  const auto bk = frequency_bias(shape.harmonics).to_vector();
  std::vector<double> tiled;
  tiled.reserve(shape.channels());
  for (std::size_t h = 0; h < shape.heads; ++h) {
    tiled.insert(tiled.end(), bk.begin(), bk.end());
  }
  const Tensor freq_row = Tensor::from({1, shape.channels()}, std::move(tiled));

  WaveParams p;
  p.amplitude = clamp(softplus(matmul(x, w.amplitude)), 0.0, amplitude_ceiling);
  p.phase = matmul(x, w.phase);
  const Tensor retention_logit = add(matmul(x, w.retention), w.retention_bias);
  p.retention = sigmoid(add(matmul(retention_logit, expand), freq_row));
  // Straight-through: beta_hard - sg(beta_sig) + beta_sig.
  p.valve = ste_threshold(sigmoid(add(matmul(x, w.valve), w.valve_bias)), eps);
  return p;
}

double anneal_epsilon(std::uint64_t step, std::uint64_t total_steps, double eps_max,
                      double ramp_frac) {
  if (total_steps == 0) {
    throw ConfigError("total_steps", "must be positive for epsilon annealing");
  }
  const double ramp = ramp_frac * static_cast<double>(total_steps);
  if (ramp <= 0.0) {
    return eps_max;
  }
  return eps_max * std::min(1.0, static_cast<double>(step) / ramp);
}

} // namespace cawn
