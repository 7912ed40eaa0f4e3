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

#include "cawn/model.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "cawn/ops.hpp"

namespace cawn {

namespace {

using Visitor = std::function<void(const std::string &, Tensor &)>;

void visit_route(const std::string &prefix, DepthQuery &q, const Visitor &fn) {
  fn(prefix + ".query", q.query);
  fn(prefix + ".key_gain", q.key_gain);
}

// Canonical parameter order. Checkpoints and optimizer state rely on it.
void visit(ModelWeights &w, const Visitor &fn) {
  fn("embedding", w.embedding);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto &L = w.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    visit_route(p + "wave_route", L.wave_route, fn);
    fn(p + "wave_norm", L.wave_norm);
    fn(p + "temporal_kernel", L.temporal_kernel);
    fn(p + "gates.amplitude", L.gates.amplitude);
    fn(p + "gates.phase", L.gates.phase);
    fn(p + "gates.valve", L.gates.valve);
    fn(p + "gates.valve_bias", L.gates.valve_bias);
    fn(p + "gates.retention", L.gates.retention);
    fn(p + "gates.retention_bias", L.gates.retention_bias);
    fn(p + "ear.kernel", L.ear.kernel);
    fn(p + "ear.projection", L.ear.projection);
    fn(p + "ear.output", L.ear.output);
    visit_route(p + "ffn_route", L.ffn_route, fn);
    fn(p + "ffn_norm", L.ffn_norm);
    fn(p + "ffn_in", L.ffn_in);
    fn(p + "ffn_out", L.ffn_out);
  }
  if (w.final_route.query.defined()) {
    visit_route("final_route", w.final_route, fn);
  }
  fn("final_norm", w.final_norm);
}

Tensor normal(Shape shape, double std_dev, std::mt19937_64 &rng) {
  std::normal_distribution<double> dist(0.0, std_dev);
  std::vector<double> v(numel(shape));
  for (auto &x : v) {
    x = dist(rng);
  }
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  std::vector<double> m(rows * cols);
  for (auto &v : m) {
    v = keep(rng) ? scale : 0.0;
  }
  return Tensor::from({rows, cols}, std::move(m));
}

} // namespace

void ModelConfig::validate() const {
  auto require = [](bool ok, const char *field, const char *what) {
    if (!ok) {
      throw ConfigError(field, what);
    }
  };
  require(vocab >= 1, "model.vocab", "must be positive");
  require(dim >= 1, "model.dim", "must be positive");
  require(block_size >= 1, "model.block_size", "must be positive");
  require(layers % block_size == 0, "model.layers", "must be divisible by block_size");
  require(heads >= 1, "model.heads", "must be positive");
  require(harmonics >= 1, "model.harmonics", "must be positive");
  require(ffn_mult >= 1, "model.ffn_mult", "must be positive");
  require(ear_kernel % 2 == 1, "model.ear_kernel", "must be odd");
  require(dropout >= 0.0 && dropout < 1.0, "model.dropout", "must lie in [0, 1)");
  require(init_std > 0.0, "model.init_std", "must be positive");
  require(amplitude_ceiling > 0.0, "model.amplitude_ceiling", "must be positive");
  require(temporal_bound > 0.0, "model.temporal_bound", "must be positive");
  require(state_bound > 0.0, "model.state_bound", "must be positive");
  require(grad_bound > 0.0, "model.grad_bound", "must be positive");
  require(eps_max >= 0.0 && eps_max < 1.0, "model.eps_max", "must lie in [0, 1)");
}

std::vector<NamedTensor> ModelWeights::parameters() const {
  std::vector<NamedTensor> out;
  visit(const_cast<ModelWeights &>(*this),
        [&](const std::string &name, Tensor &t) { out.push_back({name, t}); });
  return out;
}

ModelWeights ModelWeights::clone() const {
  ModelWeights copy = *this;
  visit(copy, [](const std::string &, Tensor &t) { t = t.clone(); });
  return copy;
}

ModelWeights ModelWeights::frozen(Dtype dtype) const {
  ModelWeights copy = *this;
  visit(copy, [dtype](const std::string &, Tensor &t) {
    t = t.to(dtype);
    t.set_requires_grad(false);
  });
  return copy;
}

ModelWeights init_weights(const ModelConfig &config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const std::size_t d = config.dim;
  const double std_dev = config.init_std;
  const double out_std =
      config.layers ? std_dev / std::sqrt(2.0 * static_cast<double>(config.layers)) : std_dev;
  const WaveShape wave = config.wave();

  ModelWeights w;
  w.config = config;
  w.theta = rotation_schedule(wave.channels());
  w.embedding = normal({config.vocab, d}, std_dev, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    LayerWeights L;
    L.wave_route = DepthQuery::init(d, std_dev, rng);
    L.wave_norm = Tensor::full({d}, 1.0, true);
    // Current-tap identity plus noise, so x_t starts as SiLU(h_t).
    std::normal_distribution<double> dist(0.0, std_dev);
    std::vector<double> kernel(d * kTemporalWidth);
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t i = 0; i < kTemporalWidth; ++i) {
        kernel[c * kTemporalWidth + i] = (i + 1 == kTemporalWidth ? 1.0 : 0.0) + dist(rng);
      }
    }
    L.temporal_kernel = Tensor::from({d, kTemporalWidth}, std::move(kernel), true);
    L.gates = GateWeights::init(d, wave, std_dev, config.valve_bias, config.retention_bias,
                                rng);
    L.ear = EarWeights::init(wave, d, config.ear_width(), config.ear_kernel, std_dev,
                             out_std, rng);
    L.ffn_route = DepthQuery::init(d, std_dev, rng);
    L.ffn_norm = Tensor::full({d}, 1.0, true);
    L.ffn_in = normal({d, config.ffn_mult * d}, std_dev, rng);
    L.ffn_out = normal({config.ffn_mult * d, d}, out_std, rng);
    w.layers.push_back(std::move(L));
  }
  if (config.layers > 0) {
    w.final_route = DepthQuery::init(d, std_dev, rng);
  }
  w.final_norm = Tensor::full({d}, 1.0, true);
  return w;
}

std::size_t count_params(const ModelWeights &weights) {
  std::size_t total = 0;
  for (const auto &p : weights.parameters()) {
    total += p.tensor.numel();
  }
  return total;
}

SequenceState zero_state(const ModelConfig &config) {
  SequenceState s;
  for (std::size_t l = 0; l < config.layers; ++l) {
    s.push_back({PhaseState::zero(config.wave()), ConvHistory::zero(config.dim)});
  }
  return s;
}

ForwardResult forward(const ModelWeights &weights, const TokenBatch &tokens,
                      std::span<const SequenceState> carried, const ForwardOptions &opts) {
  const ModelConfig &cfg = weights.config;
  const std::size_t lanes = tokens.lanes;
  const std::size_t steps = tokens.steps;
  const std::size_t rows = lanes * steps;
  if (tokens.ids.size() != rows || lanes == 0) {
    throw ShapeError("forward: " + std::to_string(tokens.ids.size()) + " ids for " +
                     std::to_string(lanes) + " lanes of " + std::to_string(steps) + " steps");
  }
  if (!carried.empty() && carried.size() != lanes) {
    throw ShapeError("forward: " + std::to_string(carried.size()) + " carried states for " +
                     std::to_string(lanes) + " lanes");
  }
  const WaveShape wave = cfg.wave();
  const bool train = opts.mode == Mode::Train && cfg.dropout > 0.0;
  const ScanOptions scan_opts{cfg.state_bound, cfg.grad_bound};

  ForwardResult result;
  result.states.resize(lanes);
  for (auto &s : result.states) {
    s.resize(cfg.layers);
  }

  StreamArchive archive(embedding_lookup(weights.embedding, tokens.ids));
  std::vector<PhaseState> phase_in(lanes);
  std::vector<ConvHistory> conv_in(lanes);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const LayerWeights &L = weights.layers[l];
    for (std::size_t b = 0; b < lanes; ++b) {
      if (carried.empty()) {
        phase_in[b] = PhaseState::zero(wave);
        conv_in[b] = ConvHistory::zero(cfg.dim);
      } else {
        phase_in[b] = carried[b].at(l).phase;
        conv_in[b] = carried[b].at(l).conv;
      }
    }

    // Acoustic path.
    const Tensor h = rms_norm(attend_depth(archive, L.wave_route), L.wave_norm);
    TemporalOutput temporal =
        temporal_forward(h, L.temporal_kernel, lanes, conv_in, cfg.temporal_bound);
    const WaveParams params =
        project_params(temporal.x, L.gates, wave, opts.eps, cfg.amplitude_ceiling);
    const PushPair push = build_push(params, wave);
    ScanOutput scan = scan_forward(push.real, push.imag, params.retention, weights.theta,
                                   lanes, phase_in, wave, scan_opts);
    Tensor wave_out = ear_forward(synthesize(scan.real, scan.imag), L.ear, wave);
    if (train) {
      wave_out = mul(wave_out, dropout_mask(rows, cfg.dim, cfg.dropout,
                                            opts.dropout_seed * 1000003ULL + l));
    }
    archive.accumulate(wave_out);

    // FFN path.
    const Tensor f = rms_norm(attend_depth(archive, L.ffn_route), L.ffn_norm);
    archive.accumulate(matmul(gelu(matmul(f, L.ffn_in)), L.ffn_out));

    if ((l + 1) % cfg.block_size == 0) {
      archive.sever();
    }
    for (std::size_t b = 0; b < lanes; ++b) {
      result.states[b][l] = {std::move(scan.final_states[b]), std::move(temporal.history[b])};
    }
  }

  const Tensor top = cfg.layers ? attend_depth(archive, weights.final_route)
                                : archive.partial();
  const Tensor logits =
      matmul(rms_norm(top, weights.final_norm), transpose(weights.embedding));
  result.logits = reshape(logits, {lanes, steps, cfg.vocab});
  result.finite = all_finite(logits);
  return result;
}

} // namespace cawn
