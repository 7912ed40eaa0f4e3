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
#include <map>
#include <random>
#include <set>

#include "cawn/corpus.hpp"
#include "doctest.h"

using namespace cawn;

TEST_CASE("byte tokenizer") {
  CHECK(byte_tokenize("ab") == std::vector<std::int32_t>{97, 98});
  CHECK(byte_detokenize(byte_tokenize("ab")) == "ab");
  CHECK(byte_tokenize("").empty());

  std::mt19937_64 rng(5);
  std::string blob(1024, '\0');
  for (auto &c : blob) {
    c = static_cast<char>(rng() & 0xFF);
  }
  CHECK(byte_detokenize(byte_tokenize(blob)) == blob);

  const std::vector<std::int32_t> specials{tokens::kBos, 'x', tokens::kQuery, tokens::kPad};
  CHECK(byte_detokenize(specials) == "x");
  CHECK_THROWS_AS(byte_detokenize(std::vector<std::int32_t>{259}), RangeError);
  CHECK_THROWS_AS(byte_detokenize(std::vector<std::int32_t>{-1}), RangeError);
}

TEST_CASE("standard retrieval spec") {
  const RetrievalSpec s = RetrievalSpec::standard();
  CHECK(s.targets.size() == 3);
  CHECK_NOTHROW(s.validate());
  const std::set<std::int32_t> noise(s.noise_alphabet.begin(), s.noise_alphabet.end());
  for (auto v : s.value_alphabet) {
    CHECK(noise.count(v) == 0);
  }
  for (const auto &t : s.targets) {
    CHECK(noise.count(t.key[0]) == 0);
  }

  RetrievalSpec dup = s;
  dup.targets[1].key = dup.targets[0].key;
  CHECK_THROWS_AS(dup.validate(), ConfigError);
  RetrievalSpec leak = s;
  leak.noise_alphabet.push_back('5');
  CHECK_THROWS_AS(leak.validate(), ConfigError);
}

TEST_CASE("retrieval spec json round trip") {
  RetrievalSpec s = RetrievalSpec::standard();
  s.noise_length = 12;
  s.seed = 99;
  JsonReader r(to_json(s), "retrieval");
  RetrievalSpec back;
  read_retrieval_spec(r, back);
  CHECK(to_json(back) == to_json(s));

  auto j = to_json(s);
  j["noise_entropy"] = "zipf";
  JsonReader bad(j, "retrieval");
  CHECK_THROWS_AS(read_retrieval_spec(bad, back), ConfigError);
}

TEST_CASE("inject_noise with zero noise length puts the needle right before the query") {
  RetrievalSpec s = RetrievalSpec::standard();
  s.noise_length = 0;
  std::vector<std::int32_t> window(32, ' ');
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const NoisyWindow w = inject_noise(window, s, rng);
    const std::size_t a = w.answer_position;
    REQUIRE(a >= 4);
    // key value QUERY key value
    CHECK(w.ids[a - 1] == w.ids[a - 4]);
    CHECK(w.ids[a - 2] == tokens::kQuery);
    CHECK(w.ids[a - 3] == w.answer[0]);
    CHECK(w.ids[a] == w.answer[0]);
    CHECK(w.loss_mask.size() == window.size() - 1);
    CHECK(std::all_of(w.loss_mask.begin(), w.loss_mask.end(), [](auto m) { return m == 1; }));
  }
}

TEST_CASE("inject_noise rejects probes longer than the window") {
  RetrievalSpec s = RetrievalSpec::standard();
  s.noise_length = 30;
  std::vector<std::int32_t> window(32, ' ');
  std::mt19937_64 rng(9);
  CHECK_THROWS_AS(inject_noise(window, s, rng), ConfigError);
}

TEST_CASE("noise is uniform over the noise alphabet") {
  RetrievalSpec s = RetrievalSpec::standard();
  s.noise_length = 1000;
  std::vector<std::int32_t> window(1008, ' ');
  std::mt19937_64 rng(10);
  std::map<std::int32_t, double> hist;
  std::size_t draws = 0;
  while (draws < 100000) {
    const NoisyWindow w = inject_noise(window, s, rng);
    // The noise run sits between the needle and the query marker.
    const std::size_t start = w.answer_position - 2 - s.noise_length;
    for (std::size_t i = start; i < start + s.noise_length; ++i) {
      hist[w.ids[i]] += 1.0;
      ++draws;
    }
  }
  const std::set<std::int32_t> alphabet(s.noise_alphabet.begin(), s.noise_alphabet.end());
  CHECK(hist.size() == alphabet.size());
  const double expect = static_cast<double>(draws) / static_cast<double>(alphabet.size());
  double chi2 = 0.0;
  for (auto c : alphabet) {
    chi2 += (hist[c] - expect) * (hist[c] - expect) / expect;
  }
  // 81 degrees of freedom; the 0.999 quantile is about 126.
  INFO("chi2 " << chi2);
  CHECK(chi2 < 126.0);
}

TEST_CASE("retrieval eval layout") {
  const RetrievalSpec s = RetrievalSpec::standard();
  const RetrievalEval ev = make_retrieval_eval(s, 650, 3);
  CHECK(ev.ids.size() == 650);
  REQUIRE(ev.expected.size() == 3);
  for (std::size_t n = 0; n < 3; ++n) {
    const std::size_t at = ev.needle_positions[n];
    CHECK(std::abs(static_cast<double>(at) - s.depths[n] * 650.0) <= 1.0);
    CHECK(ev.ids[at] == s.targets[n].key[0]);
    CHECK(ev.ids[at + 1] == s.targets[n].value[0]);
    const std::size_t a = ev.answer_positions[n];
    CHECK(ev.ids[a - 2] == tokens::kQuery);
    CHECK(ev.ids[a - 1] == s.targets[n].key[0]);
    CHECK(ev.ids[a] == s.targets[n].value[0]);
    CHECK(a >= 650 - 9);
  }
  // Expected answers do not depend on the noise seed; the noise does.
  const RetrievalEval other = make_retrieval_eval(s, 650, 4);
  CHECK(other.expected == ev.expected);
  CHECK(other.ids != ev.ids);
  CHECK(make_retrieval_eval(s, 650, 3).ids == ev.ids);
  CHECK_THROWS_AS(make_retrieval_eval(s, 8, 3), ConfigError);
}

TEST_CASE("token stream") {
  std::vector<std::int32_t> src(100);
  for (std::size_t i = 0; i < src.size(); ++i) {
    src[i] = static_cast<std::int32_t>(i);
  }
  StreamOptions opts;
  opts.window = 16;
  opts.noise_prob = 0.0;
  TokenStream a(src, opts, 7), b(src, opts, 7);
  Window prev = a.next();
  CHECK(prev.reset);
  CHECK(b.next().ids == prev.ids);
  for (int i = 0; i < 40; ++i) {
    const Window w = a.next();
    CHECK(b.next().ids == w.ids);
    CHECK(w.ids.size() == 17);
    CHECK(w.loss_mask.size() == 16);
    // Consecutive windows share the boundary token.
    CHECK(w.ids.front() == prev.ids.back());
    for (std::size_t t = 1; t < w.ids.size(); ++t) {
      CHECK(w.ids[t] == (w.ids[t - 1] + 1) % 100);
    }
    prev = w;
  }
  CHECK_THROWS_AS(TokenStream({}, opts, 1), ConfigError);
}

TEST_CASE("token stream noise probability") {
  std::vector<std::int32_t> src(64, 'a');
  StreamOptions opts;
  opts.window = 32;
  opts.noise_prob = 1.0;
  TokenStream s(src, opts, 3);
  for (int i = 0; i < 10; ++i) {
    const Window w = s.next();
    CHECK(std::count(w.ids.begin(), w.ids.end(), tokens::kQuery) == 1);
  }
  opts.noise_prob = 1.5;
  CHECK_THROWS_AS(TokenStream(src, opts, 1), ConfigError);
}

TEST_CASE("recall stream episodes") {
  RecallOptions opts;
  opts.window = 64;
  opts.episode_windows = {1, 2, 4};
  opts.query_gap = 8;
  RecallStream s(RetrievalSpec::standard(), opts, 11);
  RecallStream twin(RetrievalSpec::standard(), opts, 11);
  const RetrievalSpec spec = RetrievalSpec::standard();
  std::vector<std::int32_t> episode;
  int episodes = 0, queries = 0;
  auto check_episode = [&] {
    // Every query is answered by the value that followed its key's needle.
    std::map<std::int32_t, std::int32_t> planted;
    for (std::size_t i = 0; i + 1 < episode.size(); ++i) {
      if (episode[i] == tokens::kQuery) {
        REQUIRE(i + 2 < episode.size());
        REQUIRE(planted.count(episode[i + 1]) == 1);
        CHECK(episode[i + 2] == planted[episode[i + 1]]);
        ++queries;
        i += 2;
      } else if (episode[i] == 'R' || episode[i] == 'B' || episode[i] == 'G') {
        CHECK(planted.count(episode[i]) == 0);
        planted[episode[i]] = episode[i + 1];
      }
    }
  };
  for (int i = 0; i < 200; ++i) {
    const Window w = s.next();
    CHECK(twin.next().ids == w.ids);
    CHECK(w.ids.size() == 65);
    if (w.reset) {
      if (!episode.empty()) {
        check_episode();
        ++episodes;
      }
      episode.assign(w.ids.begin(), w.ids.end());
    } else {
      CHECK(w.ids.front() == episode.back());
      episode.insert(episode.end(), w.ids.begin() + 1, w.ids.end());
    }
  }
  CHECK(episodes > 20);
  CHECK(queries > episodes);
}

TEST_CASE("recall stream supervises answers only") {
  RecallOptions opts;
  opts.window = 64;
  opts.episode_windows = {1, 2};
  opts.query_gap = 6;
  RecallStream s(RetrievalSpec::standard(), opts, 12);
  std::size_t answers = 0;
  for (int i = 0; i < 100; ++i) {
    const Window w = s.next();
    REQUIRE(w.loss_mask.size() == 64);
    for (std::size_t t = 0; t < 64; ++t) {
      if (w.loss_mask[t]) {
        // Label t is ids[t + 1], which must be the digit after "QUERY key".
        const std::int32_t label = w.ids[t + 1];
        CHECK(label >= '0');
        CHECK(label <= '9');
        if (t >= 1) {
          CHECK(w.ids[t - 1] == tokens::kQuery);
        }
        ++answers;
      }
    }
  }
  CHECK(answers > 100);

  opts.answers_only = false;
  RecallStream all(RetrievalSpec::standard(), opts, 12);
  const Window w = all.next();
  CHECK(std::count(w.loss_mask.begin(), w.loss_mask.end(), 1) == 64);
}
