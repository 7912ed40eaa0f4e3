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

// Inference: chunked prefill with state carry, constant-state decoding,
// sampling, the memory/throughput bench and the retrieval harness.

#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cawn/corpus.hpp"
#include "cawn/model.hpp"

namespace cawn {

struct SamplerConfig {
  enum class Kind : std::uint8_t { Greedy, Temperature };
  Kind kind = Kind::Greedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

/// Gradient-free copy of `weights` for decoding, optionally in 32-bit storage.
std::shared_ptr<const ModelWeights> inference_weights(const ModelWeights &weights,
                                                      Dtype dtype = Dtype::F64);

class DecodeSession {
public:
  explicit DecodeSession(std::shared_ptr<const ModelWeights> weights, SamplerConfig sampler = {});

  /// Consumes `ids` in chunks of `chunk_len`, carrying state between them.
  void prefill(std::span<const std::int32_t> ids, std::size_t chunk_len);
  /// Samples and consumes `n` tokens. A fresh session first consumes BOS.
  std::vector<std::int32_t> decode(std::size_t n);
  /// Next token under the sampler, from the latest logits.
  std::int32_t sample();
  /// Highest-logit token among `allowed` (first wins ties).
  std::int32_t argmax_over(std::span<const std::int32_t> allowed) const;

  std::uint64_t consumed() const { return consumed_; }
  const std::vector<double> &last_logits() const { return logits_; }
  const SequenceState &state() const { return state_; }

  /// Fixed-size encoding: header, per-layer phase and conv state and the
  /// latest logits, in the weights' storage width.
  std::string serialize() const;
  static DecodeSession deserialize(std::span<const char> bytes,
                                   std::shared_ptr<const ModelWeights> weights);

private:
  void consume(std::span<const std::int32_t> chunk);

  std::shared_ptr<const ModelWeights> weights_;
  SamplerConfig sampler_;
  SequenceState state_;
  std::vector<double> logits_;
  std::uint64_t consumed_ = 0;
  std::uint64_t draws_ = 0;
};

struct BenchRow {
  std::size_t length = 0;
  std::size_t state_bytes = 0;
  std::size_t peak_alloc = 0; // bytes above the pre-run baseline
  double tok_per_sec = 0.0;
};

/// Prefills a deterministic token sequence of each length. Chunked mode uses
/// `chunk_len`; unchunked mode runs each length in one pass. Zero lengths are
/// skipped with a warning on `warn`.
std::vector<BenchRow> bench_memory(std::shared_ptr<const ModelWeights> weights,
                                   std::span<const std::size_t> lengths, bool chunked,
                                   std::size_t chunk_len, std::uint64_t seed,
                                   std::ostream *warn = nullptr);
void write_bench_csv(std::ostream &out, std::span<const BenchRow> rows, std::uint64_t seed);

struct RetrievalRow {
  std::size_t length = 0;
  std::vector<double> target_accuracy; // per target, over trials
  double accuracy = 0.0;
};

struct RetrievalReport {
  std::vector<std::string> target_names;
  std::vector<RetrievalRow> rows;
  double chance = 0.0;
  std::size_t trials = 0;
};

/// Per length, `trials` contexts with freshly drawn values and noise. Each is
/// prefilled in chunks; at every query the answer is decoded greedily over
/// the value alphabet and compared with the planted value.
RetrievalReport run_retrieval(std::shared_ptr<const ModelWeights> weights,
                              const RetrievalSpec &spec, std::span<const std::size_t> lengths,
                              std::size_t trials, std::size_t chunk_len, unsigned threads = 1);
void write_retrieval_report(std::ostream &out, const RetrievalReport &report, std::uint64_t seed);

} // namespace cawn
