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

#include "cawn/trainer.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

#include "cawn/ops.hpp"

namespace cawn {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void fnv(std::uint64_t &h, std::uint64_t word) {
  for (int i = 0; i < 8; ++i) {
    h ^= (word >> (8 * i)) & 0xFFu;
    h *= 0x100000001B3ULL;
  }
}

void zero_grads(ModelWeights &w) {
  for (auto &p : w.parameters()) {
    p.tensor.zero_grad();
  }
}

} // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const char *field, const char *what) {
    if (!ok) {
      throw ConfigError(field, what);
    }
  };
  require(max_steps >= 1, "train.max_steps", "must be positive");
  require(micro_batch >= 1, "train.micro_batch", "must be positive");
  require(accum_steps >= 1, "train.accum_steps", "must be positive");
  require(lr_max > 0.0, "train.lr_max", "must be positive");
  require(warmup_frac > 0.0 && warmup_frac < 1.0, "train.warmup_frac", "must lie in (0, 1)");
  require(weight_decay >= 0.0, "train.weight_decay", "must be non-negative");
  require(grad_norm_skip > 0.0, "train.grad_norm_skip", "must be positive");
  require(clip_norm > 0.0, "train.clip_norm", "must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0, "train.beta1", "must lie in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "train.beta2", "must lie in [0, 1)");
  require(adam_eps > 0.0, "train.adam_eps", "must be positive");
  require(log_every >= 1, "train.log_every", "must be positive");
}

nlohmann::json to_json(const TrainConfig &c) {
  return {{"max_steps", c.max_steps},       {"micro_batch", c.micro_batch},
          {"accum_steps", c.accum_steps},   {"lr_max", c.lr_max},
          {"warmup_frac", c.warmup_frac},   {"weight_decay", c.weight_decay},
          {"grad_norm_skip", c.grad_norm_skip}, {"clip_norm", c.clip_norm},
          {"beta1", c.beta1},               {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},         {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}, {"log_every", c.log_every}};
}

void read_train_config(JsonReader &r, TrainConfig &c) {
  r.get("max_steps", c.max_steps);
  r.get("micro_batch", c.micro_batch);
  r.get("accum_steps", c.accum_steps);
  r.get("lr_max", c.lr_max);
  r.get("warmup_frac", c.warmup_frac);
  r.get("weight_decay", c.weight_decay);
  r.get("grad_norm_skip", c.grad_norm_skip);
  r.get("clip_norm", c.clip_norm);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("adam_eps", c.adam_eps);
  r.get("seed", c.seed);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("log_every", c.log_every);
  r.finish();
}

double lr_at(std::uint64_t step, const TrainConfig &c) {
  const double total = static_cast<double>(c.max_steps);
  const double warm = c.warmup_frac * total;
  const double s = std::min(static_cast<double>(step), total);
  if (s < warm) {
    return c.lr_max * s / warm;
  }
  const double progress = (s - warm) / (total - warm);
  return 0.5 * c.lr_max * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(const ModelWeights &weights, const TrainConfig &config) : config_(config) {
  for (const auto &p : weights.parameters()) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step(ModelWeights &weights, double lr) {
  ++updates_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(updates_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(updates_));
  auto params = weights.parameters();
  for (std::size_t n = 0; n < params.size(); ++n) {
    Tensor &t = params[n].tensor;
    auto value = t.mutable_data();
    if (!t.has_grad()) {
      continue;
    }
    const auto grad = t.grad();
    auto &m = m_[n];
    auto &v = v_[n];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      value[i] -= lr * config_.weight_decay * value[i];
      value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.adam_eps);
    }
  }
}

std::uint64_t AdamW::state_hash() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  fnv(h, updates_);
  for (std::size_t n = 0; n < m_.size(); ++n) {
    for (std::size_t i = 0; i < m_[n].size(); ++i) {
      fnv(h, std::bit_cast<std::uint64_t>(m_[n][i]));
      fnv(h, std::bit_cast<std::uint64_t>(v_[n][i]));
    }
  }
  return h;
}

MicroBatch next_micro_batch(std::vector<std::unique_ptr<WindowSource>> &lanes) {
  MicroBatch b;
  b.tokens.lanes = lanes.size();
  for (auto &lane : lanes) {
    Window w = lane->next();
    const std::size_t steps = w.ids.size() - 1;
    if (b.tokens.steps == 0) {
      b.tokens.steps = steps;
    } else if (b.tokens.steps != steps) {
      throw ShapeError("micro-batch lanes disagree on the window length");
    }
    b.tokens.ids.insert(b.tokens.ids.end(), w.ids.begin(), w.ids.end() - 1);
    b.targets.insert(b.targets.end(), w.ids.begin() + 1, w.ids.end());
    b.mask.insert(b.mask.end(), w.loss_mask.begin(), w.loss_mask.end());
    b.reset.push_back(w.reset);
  }
  return b;
}

Tensor micro_loss(const ModelWeights &weights, const MicroBatch &batch,
                  std::vector<SequenceState> &carried, const ForwardOptions &opts,
                  bool *finite) {
  const std::size_t lanes = batch.tokens.lanes;
  if (carried.size() != lanes) {
    carried.assign(lanes, zero_state(weights.config));
  }
  for (std::size_t b = 0; b < lanes; ++b) {
    if (batch.reset[b]) {
      carried[b] = zero_state(weights.config);
    }
  }
  ForwardResult r = forward(weights, batch.tokens, carried, opts);
  if (finite) {
    *finite = r.finite;
  }
  if (r.finite) {
    carried = std::move(r.states);
  }
  const std::size_t rows = lanes * batch.tokens.steps;
  return cross_entropy(reshape(r.logits, {rows, weights.config.vocab}), batch.targets,
                       batch.mask);
}

double global_grad_norm(const ModelWeights &weights) {
  double ss = 0.0;
  for (const auto &p : weights.parameters()) {
    if (p.tensor.has_grad()) {
      for (double g : p.tensor.grad()) {
        ss += g * g;
      }
    }
  }
  return std::sqrt(ss);
}

std::uint64_t parameter_hash(const ModelWeights &weights) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto &p : weights.parameters()) {
    for (double v : p.tensor.data()) {
      fnv(h, std::bit_cast<std::uint64_t>(v));
    }
  }
  return h;
}

Trainer::Trainer(ModelWeights weights, TrainConfig config,
                 std::vector<std::unique_ptr<WindowSource>> lanes)
    : weights_(std::move(weights)), config_(config), lanes_(std::move(lanes)),
      optimizer_(weights_, config_) {
  config_.validate();
  if (lanes_.size() != config_.micro_batch) {
    throw ConfigError("train.micro_batch", "must equal the number of data lanes (" +
                                               std::to_string(lanes_.size()) + ")");
  }
}

StepMetrics Trainer::step() {
  StepMetrics m;
  m.step = step_;
  m.lr = lr_at(step_, config_);
  m.eps = anneal_epsilon(step_, config_.max_steps, weights_.config.eps_max);
  zero_grads(weights_);

  double loss_total = 0.0;
  std::size_t finite_micro = 0;
  for (std::size_t micro = 0; micro < config_.accum_steps; ++micro) {
    const MicroBatch batch = next_micro_batch(lanes_);
    ForwardOptions opts{Mode::Train, m.eps,
                        splitmix(config_.seed ^ splitmix(step_ * config_.accum_steps + micro))};
    std::vector<SequenceState> next = carried_;
    bool forward_finite = true;
    Tensor loss = micro_loss(weights_, batch, next, opts, &forward_finite);
    if (hooks.on_loss) {
      hooks.on_loss(step_, micro, loss);
    }
    const double value = loss.item();
    if (!forward_finite || !std::isfinite(value)) {
      // Abort: this micro-step counts as consumed, the whole update is dropped.
      m.skipped = true;
      m.skip_reason = "non-finite loss";
      break;
    }
    carried_ = std::move(next);
    scale(loss, 1.0 / static_cast<double>(config_.accum_steps)).backward();
    loss_total += value;
    ++finite_micro;
  }
  m.loss = finite_micro ? loss_total / static_cast<double>(finite_micro)
                        : std::numeric_limits<double>::quiet_NaN();

  if (!m.skipped) {
    if (hooks.on_grads) {
      hooks.on_grads(step_, weights_);
    }
    m.grad_norm = global_grad_norm(weights_);
    if (!std::isfinite(m.grad_norm) || m.grad_norm > config_.grad_norm_skip) {
      m.skipped = true;
      m.skip_reason = "gradient norm above threshold";
    }
  }
  if (m.skipped) {
    zero_grads(weights_);
  } else {
    if (m.grad_norm > config_.clip_norm) {
      const double factor = config_.clip_norm / m.grad_norm;
      for (auto &p : weights_.parameters()) {
        if (p.tensor.has_grad()) {
          for (double &g : p.tensor.mutable_grad()) {
            g *= factor;
          }
        }
      }
    }
    optimizer_.step(weights_, m.lr);
  }
  ++step_; // the schedule advances on skipped steps too
  return m;
}

EvalResult evaluate(const ModelWeights &weights, WindowSource &source, std::size_t windows) {
  const ModelWeights frozen = weights.frozen();
  std::vector<SequenceState> carried;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < windows; ++n) {
    Window w = source.next();
    MicroBatch b;
    b.tokens = {1, w.ids.size() - 1, {w.ids.begin(), w.ids.end() - 1}};
    b.targets.assign(w.ids.begin() + 1, w.ids.end());
    b.mask = w.loss_mask;
    b.reset = {w.reset};
    std::size_t masked = 0;
    for (auto v : b.mask) {
      masked += v;
    }
    const Tensor loss = micro_loss(frozen, b, carried, ForwardOptions{Mode::Eval, weights.config.eps_max, 0});
    total += loss.item() * static_cast<double>(masked);
    count += masked;
  }
  EvalResult r;
  r.tokens = count;
  r.loss = count ? total / static_cast<double>(count) : 0.0;
  r.perplexity = std::exp(r.loss);
  return r;
}

MetricsLog::MetricsLog(const std::string &path, std::uint64_t seed)
    : out_(path, std::ios::app), path_(path) {
  if (!out_) {
    throw IoError("cannot open metrics log " + path);
  }
  if (out_.tellp() == 0) {
    out_ << "# seed=" << seed << "\n";
    out_ << "step,micro_loss,lr,grad_norm,skipped,eps\n";
  }
}

void MetricsLog::write(const StepMetrics &m) {
  out_ << m.step << ',' << m.loss << ',' << m.lr << ',' << m.grad_norm << ','
       << (m.skipped ? 1 : 0) << ',' << m.eps << '\n';
  out_.flush();
  if (!out_) {
    throw IoError("cannot append to metrics log " + path_);
  }
}

} // namespace cawn
