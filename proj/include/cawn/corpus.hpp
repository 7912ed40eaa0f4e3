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

// Data pipeline: byte tokenizer, endless window streams over text, noise
// augmentation, and the synthetic associative-recall task.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cawn/json_io.hpp"

namespace cawn {

namespace tokens {
inline constexpr std::int32_t kPad = 256;
inline constexpr std::int32_t kBos = 257;
inline constexpr std::int32_t kQuery = 258;
inline constexpr std::size_t kVocab = 259;
} // namespace tokens

std::vector<std::int32_t> byte_tokenize(std::string_view text);
/// Inverse of byte_tokenize. Special ids render as nothing; ids outside the
/// vocabulary throw RangeError.
std::string byte_detokenize(std::span<const std::int32_t> ids);

struct RetrievalTarget {
  std::vector<std::int32_t> key;
  std::vector<std::int32_t> value;
};

/// Needles are `key value`; queries are `QUERY key` answered by `value`.
struct RetrievalSpec {
  std::vector<RetrievalTarget> targets;
  std::vector<std::int32_t> value_alphabet;
  std::vector<std::int32_t> noise_alphabet; // drawn uniformly
  std::vector<double> depths;               // needle start as a fraction of the context
  std::size_t noise_length = 0;             // noise between needle and query in inject_noise
  std::uint64_t seed = 0;

  /// Three single-byte keys, digit values, printable noise without either.
  static RetrievalSpec standard();
  std::size_t needle_length(std::size_t n) const;
  std::size_t query_length(std::size_t n) const;
  void validate() const;
};

nlohmann::json to_json(const RetrievalSpec &spec);
void read_retrieval_spec(JsonReader &reader, RetrievalSpec &spec);

struct NoisyWindow {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> loss_mask; // one per next-token label
  std::size_t answer_position = 0;     // index of the first answer token in ids
  std::vector<std::int32_t> answer;
};

/// Overwrites part of `window` with `needle, noise..., QUERY key, value` for
/// one target of `spec` chosen by `rng`, at a random offset.
NoisyWindow inject_noise(std::span<const std::int32_t> window, const RetrievalSpec &spec,
                         std::mt19937_64 &rng);

struct RetrievalEval {
  std::vector<std::int32_t> ids;
  std::vector<std::vector<std::int32_t>> expected; // one per target
  std::vector<std::size_t> answer_positions;       // index of each answer in ids
  std::vector<std::size_t> needle_positions;
};

/// Noise of `total_length` tokens with one needle per target at its depth
/// and all queries at the end. Noise comes from `noise_seed`; the expected
/// answers are the spec's values.
RetrievalEval make_retrieval_eval(const RetrievalSpec &spec, std::size_t total_length,
                                  std::uint64_t noise_seed);

/// `window + 1` ids: inputs are ids[0..T), labels ids[1..T].
struct Window {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> loss_mask; // T entries
  bool reset = false; // the lane's stream restarted; carried state is stale
};

class WindowSource {
public:
  virtual ~WindowSource() = default;
  virtual Window next() = 0;
  virtual std::size_t window() const = 0;
};

struct StreamOptions {
  std::size_t window = 64;
  double noise_prob = 0.1; // chance a window carries an injected retrieval probe
  RetrievalSpec noise_spec = RetrievalSpec::standard();
};

/// Consecutive windows over a token source, wrapping forever. Each window
/// starts where the previous one ended so carried states stay aligned.
class TokenStream : public WindowSource {
public:
  TokenStream(std::vector<std::int32_t> source, StreamOptions options, std::uint64_t seed);
  Window next() override;
  std::size_t window() const override { return options_.window; }

private:
  std::vector<std::int32_t> source_;
  StreamOptions options_;
  std::mt19937_64 rng_;
  std::size_t cursor_ = 0;
  bool first_ = true;
};

struct RecallOptions {
  std::size_t window = 256;
  std::vector<std::size_t> episode_windows{1, 2, 4, 8, 16}; // episode length choices
  std::size_t query_gap = 48; // mean noise tokens between queries
  bool answers_only = true;   // supervise query answers only; noise is unpredictable anyway
};

/// Endless noisy associative-recall episodes. Every episode draws fresh
/// values, plants one needle per key early on, then asks queries at random
/// times until it ends. Episodes span whole windows; a new one resets state.
class RecallStream : public WindowSource {
public:
  RecallStream(RetrievalSpec spec, RecallOptions options, std::uint64_t seed);
  Window next() override;
  std::size_t window() const override { return options_.window; }

private:
  void new_episode();

  RetrievalSpec spec_;
  RecallOptions options_;
  std::mt19937_64 rng_;
  std::vector<std::int32_t> episode_;
  std::vector<std::uint8_t> answer_; // 1 where the token answers a query
  std::size_t cursor_ = 0;
};

std::vector<std::int32_t> read_token_file(const std::string &path);

} // namespace cawn
