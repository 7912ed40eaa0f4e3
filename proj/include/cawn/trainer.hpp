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

// Optimization loop: AdamW with decoupled decay, linear warmup into cosine
// decay, gradient accumulation, valve-threshold annealing, detached state
// carry between micro-batches, and the skip rules for non-finite losses and
// exploding gradients.

#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cawn/corpus.hpp"
#include "cawn/json_io.hpp"
#include "cawn/model.hpp"

namespace cawn {

struct TrainConfig {
  std::uint64_t max_steps = 500;
  std::size_t micro_batch = 1; // lanes per micro-step
  std::size_t accum_steps = 36;
  double lr_max = 8e-4;
  double warmup_frac = 0.05;
  double weight_decay = 0.01;
  double grad_norm_skip = 1000.0;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1234;
  std::uint64_t checkpoint_every = 0; // 0 = only at the end
  std::uint64_t log_every = 10;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig &config);
void read_train_config(JsonReader &reader, TrainConfig &config);

double lr_at(std::uint64_t step, const TrainConfig &config);

class AdamW {
public:
  AdamW(const ModelWeights &weights, const TrainConfig &config);
  /// One update from the gradients currently held by the parameters.
  void step(ModelWeights &weights, double lr);
  std::uint64_t updates() const { return updates_; }
  std::uint64_t state_hash() const;

private:
  TrainConfig config_;
  std::uint64_t updates_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct MicroBatch {
  TokenBatch tokens;
  std::vector<std::int32_t> targets; // lanes * steps
  std::vector<std::uint8_t> mask;
  std::vector<bool> reset; // per lane
};

MicroBatch next_micro_batch(std::vector<std::unique_ptr<WindowSource>> &lanes);

/// Mean masked cross-entropy of one micro-batch. `carried` is read as the
/// incoming state and overwritten with the detached outgoing state; lanes
/// flagged for reset start from zero.
Tensor micro_loss(const ModelWeights &weights, const MicroBatch &batch,
                  std::vector<SequenceState> &carried, const ForwardOptions &opts,
                  bool *finite = nullptr);

struct StepMetrics {
  std::uint64_t step = 0;
  double loss = 0.0; // mean over the finite micro-steps
  double lr = 0.0;
  double grad_norm = 0.0; // before clipping
  bool skipped = false;
  double eps = 0.0;
  std::string skip_reason;
};

/// Fault-injection points used by the stability tests.
struct TrainHooks {
  std::function<void(std::uint64_t step, std::size_t micro, Tensor &loss)> on_loss;
  std::function<void(std::uint64_t step, ModelWeights &weights)> on_grads;
};

class Trainer {
public:
  Trainer(ModelWeights weights, TrainConfig config,
          std::vector<std::unique_ptr<WindowSource>> lanes);

  StepMetrics step();

  ModelWeights &weights() { return weights_; }
  const ModelWeights &weights() const { return weights_; }
  const AdamW &optimizer() const { return optimizer_; }
  std::uint64_t step_count() const { return step_; }
  const std::vector<SequenceState> &carried() const { return carried_; }
  TrainHooks hooks;

private:
  ModelWeights weights_;
  TrainConfig config_;
  std::vector<std::unique_ptr<WindowSource>> lanes_;
  AdamW optimizer_;
  std::vector<SequenceState> carried_;
  std::uint64_t step_ = 0;
};

double global_grad_norm(const ModelWeights &weights);
std::uint64_t parameter_hash(const ModelWeights &weights);

struct EvalResult {
  double loss = 0.0;
  double perplexity = 0.0;
  std::size_t tokens = 0;
};

/// Streaming evaluation over `windows` consecutive windows with carried
/// state, eval mode.
EvalResult evaluate(const ModelWeights &weights, WindowSource &source, std::size_t windows);

/// Append-only metrics CSV.
class MetricsLog {
public:
  MetricsLog(const std::string &path, std::uint64_t seed);
  void write(const StepMetrics &m);

private:
  std::ofstream out_;
  std::string path_;
};

} // namespace cawn
