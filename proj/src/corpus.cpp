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

#include "cawn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

namespace cawn {

std::vector<std::int32_t> byte_tokenize(std::string_view text) {
  std::vector<std::int32_t> ids;
  ids.reserve(text.size());
  for (char c : text) {
    ids.push_back(static_cast<unsigned char>(c));
  }
  return ids;
}

std::string byte_detokenize(std::span<const std::int32_t> ids) {
  std::string out;
  out.reserve(ids.size());
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens::kVocab) {
      throw RangeError("byte_detokenize: id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(tokens::kVocab));
    }
    if (id < 256) {
      out.push_back(static_cast<char>(id));
    }
  }
  return out;
}

RetrievalSpec RetrievalSpec::standard() {
  RetrievalSpec s;
  for (char key : {'R', 'B', 'G'}) {
    s.targets.push_back({{key}, {'0'}});
  }
  s.targets[1].value = {'4'};
  s.targets[2].value = {'7'};
  for (char d = '0'; d <= '9'; ++d) {
    s.value_alphabet.push_back(d);
  }
  for (std::int32_t c = 0x20; c < 0x7F; ++c) {
    const bool digit = c >= '0' && c <= '9';
    if (!digit && c != 'R' && c != 'B' && c != 'G') {
      s.noise_alphabet.push_back(c);
    }
  }
  s.depths = {0.1, 0.4, 0.7};
  s.noise_length = 0;
  return s;
}

std::size_t RetrievalSpec::needle_length(std::size_t n) const {
  return targets[n].key.size() + targets[n].value.size();
}

std::size_t RetrievalSpec::query_length(std::size_t n) const {
  return 1 + targets[n].key.size() + targets[n].value.size();
}

void RetrievalSpec::validate() const {
  if (targets.empty()) {
    throw ConfigError("retrieval.targets", "needs at least one target");
  }
  if (value_alphabet.empty()) {
    throw ConfigError("retrieval.value_alphabet", "must not be empty");
  }
  if (noise_alphabet.empty()) {
    throw ConfigError("retrieval.noise_alphabet", "must not be empty");
  }
  if (depths.size() != targets.size()) {
    throw ConfigError("retrieval.depths", "needs one depth per target");
  }
  for (double d : depths) {
    if (!(d >= 0.0 && d < 1.0)) {
      throw ConfigError("retrieval.depths", "must lie in [0, 1)");
    }
  }
  const std::set<std::int32_t> values(value_alphabet.begin(), value_alphabet.end());
  std::set<std::int32_t> key_tokens;
  std::set<std::vector<std::int32_t>> keys;
  auto check_id = [](std::int32_t id, const char *field) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens::kVocab || id == tokens::kQuery) {
      throw ConfigError(field, "contains an invalid token id " + std::to_string(id));
    }
  };
  for (const auto &t : targets) {
    if (t.key.empty() || t.value.empty()) {
      throw ConfigError("retrieval.targets", "keys and values must be non-empty");
    }
    if (!keys.insert(t.key).second) {
      throw ConfigError("retrieval.targets", "keys must be unique");
    }
    for (auto id : t.key) {
      check_id(id, "retrieval.targets");
      key_tokens.insert(id);
    }
    for (auto id : t.value) {
      if (!values.count(id)) {
        throw ConfigError("retrieval.targets", "value token outside the value alphabet");
      }
    }
  }
  for (auto id : value_alphabet) {
    check_id(id, "retrieval.value_alphabet");
  }
  for (auto id : noise_alphabet) {
    check_id(id, "retrieval.noise_alphabet");
    if (values.count(id) || key_tokens.count(id)) {
      throw ConfigError("retrieval.noise_alphabet", "must exclude value and key tokens");
    }
  }
}

nlohmann::json to_json(const RetrievalSpec &spec) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto &t : spec.targets) {
    targets.push_back({{"key", t.key}, {"value", t.value}});
  }
  return {{"targets", targets},           {"value_alphabet", spec.value_alphabet},
          {"noise_alphabet", spec.noise_alphabet}, {"noise_entropy", "uniform"},
          {"depths", spec.depths},        {"noise_length", spec.noise_length},
          {"seed", spec.seed}};
}

void read_retrieval_spec(JsonReader &r, RetrievalSpec &spec) {
  if (r.has("targets")) {
    std::vector<nlohmann::json> raw;
    r.get("targets", raw);
    spec.targets.clear();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      JsonReader t(raw[i], r.path("targets") + "." + std::to_string(i));
      RetrievalTarget target;
      t.get("key", target.key);
      t.get("value", target.value);
      t.finish();
      spec.targets.push_back(std::move(target));
    }
  }
  r.get("value_alphabet", spec.value_alphabet);
  r.get("noise_alphabet", spec.noise_alphabet);
  std::string entropy = "uniform";
  r.get("noise_entropy", entropy);
  if (entropy != "uniform") {
    throw ConfigError(r.path("noise_entropy"), "only \"uniform\" is supported");
  }
  r.get("depths", spec.depths);
  r.get("noise_length", spec.noise_length);
  r.get("seed", spec.seed);
  r.finish();
  spec.validate();
}

namespace {

std::int32_t draw(const std::vector<std::int32_t> &alphabet, std::mt19937_64 &rng) {
  return alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
}

void fill_noise(std::span<std::int32_t> out, const RetrievalSpec &spec, std::mt19937_64 &rng) {
  for (auto &id : out) {
    id = draw(spec.noise_alphabet, rng);
  }
}

std::vector<std::int32_t> fresh_value(const RetrievalTarget &t, const RetrievalSpec &spec,
                                      std::mt19937_64 &rng) {
  std::vector<std::int32_t> v(t.value.size());
  for (auto &id : v) {
    id = draw(spec.value_alphabet, rng);
  }
  return v;
}

// Writes `seq` at `at` and returns the position just past it.
std::size_t put(std::vector<std::int32_t> &dst, std::size_t at,
                const std::vector<std::int32_t> &seq) {
  std::copy(seq.begin(), seq.end(), dst.begin() + static_cast<long>(at));
  return at + seq.size();
}

} // namespace

NoisyWindow inject_noise(std::span<const std::int32_t> window, const RetrievalSpec &spec,
                         std::mt19937_64 &rng) {
  spec.validate();
  const std::size_t t = std::uniform_int_distribution<std::size_t>(0, spec.targets.size() - 1)(rng);
  const RetrievalTarget &target = spec.targets[t];
  const std::size_t needed = spec.needle_length(t) + spec.noise_length + spec.query_length(t);
  if (needed > window.size()) {
    throw ConfigError("retrieval.noise_length", "probe of " + std::to_string(needed) +
                                                    " tokens does not fit a window of " +
                                                    std::to_string(window.size()));
  }
  NoisyWindow out;
  out.ids.assign(window.begin(), window.end());
  out.answer = fresh_value(target, spec, rng);
  std::size_t at = std::uniform_int_distribution<std::size_t>(0, window.size() - needed)(rng);
  at = put(out.ids, at, target.key);
  at = put(out.ids, at, out.answer);
  fill_noise(std::span(out.ids).subspan(at, spec.noise_length), spec, rng);
  at += spec.noise_length;
  out.ids[at++] = tokens::kQuery;
  at = put(out.ids, at, target.key);
  out.answer_position = at;
  put(out.ids, at, out.answer);
  out.loss_mask.assign(window.size() - 1, 1);
  return out;
}

RetrievalEval make_retrieval_eval(const RetrievalSpec &spec, std::size_t total_length,
                                  std::uint64_t noise_seed) {
  spec.validate();
  std::size_t query_block = 0, needles = 0;
  for (std::size_t n = 0; n < spec.targets.size(); ++n) {
    query_block += spec.query_length(n);
    needles += spec.needle_length(n);
  }
  if (total_length < needles + query_block) {
    throw ConfigError("retrieval.length", "context of " + std::to_string(total_length) +
                                              " tokens cannot hold the needles and queries");
  }
  const std::size_t body = total_length - query_block;
  std::mt19937_64 rng(noise_seed);
  RetrievalEval ev;
  ev.ids.assign(total_length, 0);
  fill_noise(ev.ids, spec, rng);

  std::vector<std::uint8_t> used(body, 0);
  for (std::size_t n = 0; n < spec.targets.size(); ++n) {
    const std::size_t len = spec.needle_length(n);
    const auto start = static_cast<std::size_t>(
        std::llround(spec.depths[n] * static_cast<double>(total_length)));
    if (start + len > body) {
      throw ConfigError("retrieval.depths", "needle " + std::to_string(n) +
                                                " runs into the query block");
    }
    for (std::size_t i = start; i < start + len; ++i) {
      if (used[i]) {
        throw ConfigError("retrieval.depths", "needles overlap");
      }
      used[i] = 1;
    }
    put(ev.ids, put(ev.ids, start, spec.targets[n].key), spec.targets[n].value);
    ev.needle_positions.push_back(start);
  }
  std::size_t at = body;
  for (const auto &t : spec.targets) {
    ev.ids[at++] = tokens::kQuery;
    at = put(ev.ids, at, t.key);
    ev.answer_positions.push_back(at);
    ev.expected.push_back(t.value);
    at = put(ev.ids, at, t.value);
  }
  return ev;
}

TokenStream::TokenStream(std::vector<std::int32_t> source, StreamOptions options,
                         std::uint64_t seed)
    : source_(std::move(source)), options_(std::move(options)), rng_(seed) {
  if (source_.empty()) {
    throw ConfigError("data.text", "token source is empty");
  }
  if (options_.window == 0) {
    throw ConfigError("data.window", "must be positive");
  }
  if (!(options_.noise_prob >= 0.0 && options_.noise_prob <= 1.0)) {
    throw ConfigError("data.noise_prob", "must lie in [0, 1]");
  }
  cursor_ = std::uniform_int_distribution<std::size_t>(0, source_.size() - 1)(rng_);
}

Window TokenStream::next() {
  const std::size_t n = source_.size();
  Window w;
  w.reset = first_;
  first_ = false;
  w.ids.resize(options_.window + 1);
  for (std::size_t i = 0; i <= options_.window; ++i) {
    w.ids[i] = source_[(cursor_ + i) % n];
  }
  // Crossing the end of the source is a document boundary.
  if (cursor_ + options_.window >= n) {
    first_ = true;
  }
  cursor_ = (cursor_ + options_.window) % n;
  w.loss_mask.assign(options_.window, 1);
  if (options_.noise_prob > 0.0 &&
      std::bernoulli_distribution(options_.noise_prob)(rng_)) {
    w.ids = inject_noise(w.ids, options_.noise_spec, rng_).ids;
  }
  return w;
}

RecallStream::RecallStream(RetrievalSpec spec, RecallOptions options, std::uint64_t seed)
    : spec_(std::move(spec)), options_(std::move(options)), rng_(seed) {
  spec_.validate();
  if (options_.window == 0 || options_.episode_windows.empty() || options_.query_gap == 0) {
    throw ConfigError("data.recall", "window, episode lengths and query gap must be positive");
  }
  new_episode();
}

void RecallStream::new_episode() {
  const std::size_t choice = options_.episode_windows[std::uniform_int_distribution<std::size_t>(
      0, options_.episode_windows.size() - 1)(rng_)];
  const std::size_t length = choice * options_.window + 1;
  episode_.assign(length, 0);
  answer_.assign(length, 0);
  fill_noise(episode_, spec_, rng_);
  std::vector<std::uint8_t> used(length, 0);
  auto free = [&](std::size_t at, std::size_t len) {
    if (at + len > length) {
      return false;
    }
    for (std::size_t i = at; i < at + len; ++i) {
      if (used[i]) {
        return false;
      }
    }
    return true;
  };
  auto claim = [&](std::size_t at, std::size_t len) {
    std::fill(used.begin() + static_cast<long>(at), used.begin() + static_cast<long>(at + len), 1);
  };

  // Needles land in the first half of the episode.
  const std::size_t n_targets = spec_.targets.size();
  std::vector<std::vector<std::int32_t>> values(n_targets);
  std::vector<std::size_t> planted(n_targets, length);
  for (std::size_t n = 0; n < n_targets; ++n) {
    values[n] = fresh_value(spec_.targets[n], spec_, rng_);
    const std::size_t len = spec_.needle_length(n);
    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::size_t at =
          std::uniform_int_distribution<std::size_t>(0, std::max<std::size_t>(length / 2, 1) - 1)(rng_);
      if (free(at, len)) {
        claim(at, len);
        put(episode_, put(episode_, at, spec_.targets[n].key), values[n]);
        planted[n] = at + len;
        break;
      }
    }
  }

  std::exponential_distribution<double> gap(1.0 / static_cast<double>(options_.query_gap));
  std::size_t at = *std::min_element(planted.begin(), planted.end());
  while (true) {
    at += 1 + static_cast<std::size_t>(gap(rng_));
    std::vector<std::size_t> ready;
    for (std::size_t n = 0; n < n_targets; ++n) {
      if (planted[n] <= at) {
        ready.push_back(n);
      }
    }
    if (ready.empty()) {
      continue;
    }
    const std::size_t n =
        ready[std::uniform_int_distribution<std::size_t>(0, ready.size() - 1)(rng_)];
    const std::size_t len = spec_.query_length(n);
    if (at + len > length) {
      break;
    }
    if (!free(at, len)) {
      continue;
    }
    claim(at, len);
    episode_[at] = tokens::kQuery;
    const std::size_t answer_at = put(episode_, at + 1, spec_.targets[n].key);
    put(episode_, answer_at, values[n]);
    std::fill(answer_.begin() + static_cast<long>(answer_at),
              answer_.begin() + static_cast<long>(at + len), 1);
    at += len;
  }
  cursor_ = 0;
}

Window RecallStream::next() {
  Window w;
  if (cursor_ + options_.window + 1 > episode_.size()) {
    new_episode();
  }
  w.reset = cursor_ == 0;
  w.ids.assign(episode_.begin() + static_cast<long>(cursor_),
               episode_.begin() + static_cast<long>(cursor_ + options_.window + 1));
  if (options_.answers_only) {
    // Label i is token i + 1.
    w.loss_mask.assign(answer_.begin() + static_cast<long>(cursor_ + 1),
                       answer_.begin() + static_cast<long>(cursor_ + options_.window + 1));
  } else {
    w.loss_mask.assign(options_.window, 1);
  }
  cursor_ += options_.window;
  return w;
}

std::vector<std::int32_t> read_token_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return byte_tokenize(text);
}

} // namespace cawn
