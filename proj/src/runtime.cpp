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

#include "cawn/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <random>
#include <thread>

#include "cawn/memory_stats.hpp"

namespace cawn {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'W', 'N', 'D', 'S', '0', '1'};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Writer {
public:
  explicit Writer(bool f32) : f32_(f32) {}
  template <class T> void raw(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFFu));
    }
  }
  void value(double v) {
    if (f32_) {
      raw(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      raw(std::bit_cast<std::uint64_t>(v));
    }
  }
  void values(const std::vector<double> &vs) {
    for (double v : vs) {
      value(v);
    }
  }
  std::string take() { return std::move(out_); }

private:
  bool f32_;
  std::string out_;
};

class Reader {
public:
  explicit Reader(std::span<const char> in) : in_(in) {}
  template <class T> T raw() {
    if (at_ + sizeof(T) > in_.size()) {
      throw IoError("decode session: truncated");
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[at_ + i])) << (8 * i);
    }
    at_ += sizeof(T);
    return static_cast<T>(v);
  }
  double value(bool f32) {
    return f32 ? static_cast<double>(std::bit_cast<float>(raw<std::uint32_t>()))
               : std::bit_cast<double>(raw<std::uint64_t>());
  }
  void values(std::vector<double> &vs, std::size_t n, bool f32) {
    vs.resize(n);
    for (auto &v : vs) {
      v = value(f32);
    }
  }
  bool done() const { return at_ == in_.size(); }

private:
  std::span<const char> in_;
  std::size_t at_ = 0;
};

ForwardOptions eval_options(const ModelWeights &w) {
  return {Mode::Eval, w.config.eps_max, 0};
}

} // namespace

std::shared_ptr<const ModelWeights> inference_weights(const ModelWeights &weights, Dtype dtype) {
  return std::make_shared<const ModelWeights>(weights.frozen(dtype));
}

DecodeSession::DecodeSession(std::shared_ptr<const ModelWeights> weights, SamplerConfig sampler)
    : weights_(std::move(weights)), sampler_(sampler), state_(zero_state(weights_->config)) {
  if (sampler_.kind == SamplerConfig::Kind::Temperature && !(sampler_.temperature > 0.0)) {
    throw ConfigError("sampler.temperature", "must be positive");
  }
}

void DecodeSession::consume(std::span<const std::int32_t> chunk) {
  TokenBatch batch{1, chunk.size(), {chunk.begin(), chunk.end()}};
  const std::vector<SequenceState> carried{state_};
  ForwardResult r = forward(*weights_, batch, carried, eval_options(*weights_));
  state_ = std::move(r.states[0]);
  const std::size_t vocab = weights_->config.vocab;
  const auto all = r.logits.data();
  logits_.assign(all.end() - static_cast<long>(vocab), all.end());
  consumed_ += chunk.size();
}

void DecodeSession::prefill(std::span<const std::int32_t> ids, std::size_t chunk_len) {
  if (chunk_len == 0) {
    throw ConfigError("chunk_len", "must be at least 1");
  }
  for (std::size_t at = 0; at < ids.size(); at += chunk_len) {
    consume(ids.subspan(at, std::min(chunk_len, ids.size() - at)));
  }
}

std::int32_t DecodeSession::argmax_over(std::span<const std::int32_t> allowed) const {
  if (logits_.empty()) {
    throw InternalError("decode session has no logits yet");
  }
  std::int32_t best = allowed.front();
  for (auto id : allowed) {
    if (logits_.at(static_cast<std::size_t>(id)) > logits_[static_cast<std::size_t>(best)]) {
      best = id;
    }
  }
  return best;
}

std::int32_t DecodeSession::sample() {
  if (logits_.empty()) {
    throw InternalError("decode session has no logits yet");
  }
  if (sampler_.kind == SamplerConfig::Kind::Greedy) {
    return static_cast<std::int32_t>(std::max_element(logits_.begin(), logits_.end()) -
                                     logits_.begin());
  }
  const double top = *std::max_element(logits_.begin(), logits_.end());
  std::vector<double> p(logits_.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((logits_[i] - top) / sampler_.temperature);
    z += p[i];
  }
  const double u =
      static_cast<double>(splitmix(sampler_.seed ^ splitmix(draws_++)) >> 11) * 0x1.0p-53 * z;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) {
      return static_cast<std::int32_t>(i);
    }
  }
  return static_cast<std::int32_t>(p.size() - 1);
}

std::vector<std::int32_t> DecodeSession::decode(std::size_t n) {
  std::vector<std::int32_t> out;
  out.reserve(n);
  if (n && logits_.empty()) {
    const std::int32_t bos = tokens::kBos;
    consume(std::span(&bos, 1));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t tok = sample();
    out.push_back(tok);
    consume(std::span(&tok, 1));
  }
  return out;
}

std::string DecodeSession::serialize() const {
  const ModelConfig &c = weights_->config;
  const bool f32 = weights_->embedding.dtype() == Dtype::F32;
  Writer w(f32);
  for (char m : kMagic) {
    w.raw(static_cast<std::uint8_t>(m));
  }
  w.raw(static_cast<std::uint8_t>(f32 ? 1 : 0));
  w.raw(static_cast<std::uint8_t>(sampler_.kind));
  w.raw(static_cast<std::uint8_t>(logits_.empty() ? 0 : 1));
  w.raw(static_cast<std::uint8_t>(0));
  w.raw(static_cast<std::uint32_t>(c.layers));
  w.raw(static_cast<std::uint32_t>(c.heads));
  w.raw(static_cast<std::uint32_t>(c.harmonics));
  w.raw(static_cast<std::uint32_t>(c.dim));
  w.raw(static_cast<std::uint32_t>(c.vocab));
  w.raw(consumed_);
  w.raw(sampler_.seed);
  w.raw(draws_);
  w.raw(std::bit_cast<std::uint64_t>(sampler_.temperature));
  for (const auto &layer : state_) {
    w.values(layer.phase.real);
    w.values(layer.phase.imag);
    w.values(layer.conv.rows);
  }
  if (logits_.empty()) {
    w.values(std::vector<double>(c.vocab, 0.0));
  } else {
    w.values(logits_);
  }
  return w.take();
}

DecodeSession DecodeSession::deserialize(std::span<const char> bytes,
                                         std::shared_ptr<const ModelWeights> weights) {
  Reader r(bytes);
  for (char m : kMagic) {
    if (r.raw<std::uint8_t>() != static_cast<std::uint8_t>(m)) {
      throw IoError("decode session: bad magic");
    }
  }
  const ModelConfig &c = weights->config;
  const bool f32 = r.raw<std::uint8_t>() == 1;
  if (f32 != (weights->embedding.dtype() == Dtype::F32)) {
    throw IoError("decode session: storage width differs from the weights");
  }
  SamplerConfig sampler;
  sampler.kind = static_cast<SamplerConfig::Kind>(r.raw<std::uint8_t>());
  const bool has_logits = r.raw<std::uint8_t>() == 1;
  r.raw<std::uint8_t>();
  const auto layers = r.raw<std::uint32_t>(), heads = r.raw<std::uint32_t>(),
             harmonics = r.raw<std::uint32_t>(), dim = r.raw<std::uint32_t>(),
             vocab = r.raw<std::uint32_t>();
  if (layers != c.layers || heads != c.heads || harmonics != c.harmonics || dim != c.dim ||
      vocab != c.vocab) {
    throw IoError("decode session: model shape differs from the weights");
  }
  const auto consumed = r.raw<std::uint64_t>();
  sampler.seed = r.raw<std::uint64_t>();
  const auto draws = r.raw<std::uint64_t>();
  sampler.temperature = std::bit_cast<double>(r.raw<std::uint64_t>());
  DecodeSession s(std::move(weights), sampler);
  s.consumed_ = consumed;
  s.draws_ = draws;
  const std::size_t j = c.heads * c.harmonics;
  for (auto &layer : s.state_) {
    r.values(layer.phase.real, j, f32);
    r.values(layer.phase.imag, j, f32);
    r.values(layer.conv.rows, 2 * c.dim, f32);
  }
  r.values(s.logits_, c.vocab, f32);
  if (!has_logits) {
    s.logits_.clear();
  }
  if (!r.done()) {
    throw IoError("decode session: trailing bytes");
  }
  return s;
}

std::vector<BenchRow> bench_memory(std::shared_ptr<const ModelWeights> weights,
                                   std::span<const std::size_t> lengths, bool chunked,
                                   std::size_t chunk_len, std::uint64_t seed, std::ostream *warn) {
  std::vector<BenchRow> rows;
  for (std::size_t length : lengths) {
    if (length == 0) {
      if (warn) {
        *warn << "warning: skipping length 0\n";
      }
      continue;
    }
    std::mt19937_64 rng(splitmix(seed ^ length));
    std::uniform_int_distribution<std::int32_t> byte(0, 255);
    std::vector<std::int32_t> ids(length);
    for (auto &id : ids) {
      id = byte(rng);
    }
    DecodeSession session(weights);
    const std::size_t base = memory_stats::current_bytes();
    memory_stats::reset_peak();
    const auto t0 = std::chrono::steady_clock::now();
    session.prefill(ids, chunked ? chunk_len : length);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    BenchRow row;
    row.length = length;
    row.peak_alloc = memory_stats::peak_bytes() - std::min(base, memory_stats::peak_bytes());
    row.state_bytes = session.serialize().size();
    row.tok_per_sec = static_cast<double>(length) / std::max(secs, 1e-12);
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(std::ostream &out, std::span<const BenchRow> rows, std::uint64_t seed) {
  out << "# seed=" << seed << "\n";
  out << "length,state_bytes,peak_alloc,tok_per_sec\n";
  for (const auto &r : rows) {
    out << r.length << ',' << r.state_bytes << ',' << r.peak_alloc << ',' << std::fixed
        << std::setprecision(1) << r.tok_per_sec << std::defaultfloat << '\n';
  }
}

RetrievalReport run_retrieval(std::shared_ptr<const ModelWeights> weights,
                              const RetrievalSpec &spec, std::span<const std::size_t> lengths,
                              std::size_t trials, std::size_t chunk_len, unsigned threads) {
  spec.validate();
  RetrievalReport report;
  report.trials = trials;
  for (const auto &t : spec.targets) {
    report.target_names.push_back(byte_detokenize(t.key));
  }
  report.chance = 1.0;
  for (std::size_t i = 0; i < spec.targets.front().value.size(); ++i) {
    report.chance /= static_cast<double>(spec.value_alphabet.size());
  }

  const std::size_t n_targets = spec.targets.size();
  for (std::size_t length : lengths) {
    std::vector<std::vector<std::uint8_t>> hits(trials, std::vector<std::uint8_t>(n_targets, 0));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t trial = next++; trial < trials; trial = next++) {
        // Values depend on the trial only; noise on the trial and length.
        std::mt19937_64 value_rng(splitmix(spec.seed ^ splitmix(trial + 1)));
        RetrievalSpec s = spec;
        for (auto &t : s.targets) {
          for (auto &v : t.value) {
            v = spec.value_alphabet[std::uniform_int_distribution<std::size_t>(
                0, spec.value_alphabet.size() - 1)(value_rng)];
          }
        }
        const RetrievalEval ev =
            make_retrieval_eval(s, length, splitmix(spec.seed + 7919 * trial + length));
        DecodeSession session(weights);
        std::size_t at = 0;
        for (std::size_t n = 0; n < n_targets; ++n) {
          const std::size_t answer = ev.answer_positions[n];
          session.prefill(std::span(ev.ids).subspan(at, answer - at), chunk_len);
          bool correct = true;
          for (auto expected : ev.expected[n]) {
            const std::int32_t got = session.argmax_over(spec.value_alphabet);
            correct &= got == expected;
            session.prefill(std::span(&got, 1), 1);
          }
          hits[trial][n] = correct;
          at = answer + ev.expected[n].size();
        }
      }
    };
    const unsigned pool = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(trials)));
    std::vector<std::thread> workers;
    for (unsigned i = 1; i < pool; ++i) {
      workers.emplace_back(worker);
    }
    worker();
    for (auto &t : workers) {
      t.join();
    }

    RetrievalRow row;
    row.length = length;
    row.target_accuracy.assign(n_targets, 0.0);
    std::size_t total = 0;
    for (const auto &h : hits) {
      for (std::size_t n = 0; n < n_targets; ++n) {
        row.target_accuracy[n] += h[n];
        total += h[n];
      }
    }
    for (auto &a : row.target_accuracy) {
      a /= static_cast<double>(std::max<std::size_t>(trials, 1));
    }
    row.accuracy = static_cast<double>(total) /
                   static_cast<double>(std::max<std::size_t>(trials * n_targets, 1));
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_retrieval_report(std::ostream &out, const RetrievalReport &r, std::uint64_t seed) {
  out << "# seed=" << seed << " trials=" << r.trials << " chance=" << std::setprecision(4)
      << r.chance << "\n";
  out << std::left << std::setw(10) << "length";
  for (const auto &name : r.target_names) {
    out << std::setw(10) << name;
  }
  out << "overall\n";
  for (const auto &row : r.rows) {
    out << std::setw(10) << row.length;
    for (double a : row.target_accuracy) {
      out << std::setw(10) << std::fixed << std::setprecision(3) << a;
    }
    out << std::fixed << std::setprecision(3) << row.accuracy << std::defaultfloat << "\n";
  }
}

} // namespace cawn
