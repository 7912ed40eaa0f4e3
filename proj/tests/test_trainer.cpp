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
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cawn/checkpoint.hpp"
#include "cawn/ops.hpp"
#include "cawn/trainer.hpp"
#include "doctest.h"

using namespace cawn;

namespace {

ModelConfig small_config(std::uint64_t seed = 1) {
  ModelConfig c;
  c.dim = 16;
  c.layers = 2;
  c.block_size = 1;
  c.heads = 2;
  c.harmonics = 4;
  c.dropout = 0.0;
  c.seed = seed;
  return c;
}

std::vector<std::int32_t> text_ids() {
  return byte_tokenize("one two three four five six seven eight nine ten. ");
}

std::vector<std::unique_ptr<WindowSource>> text_lanes(std::size_t lanes, std::size_t window,
                                                      std::uint64_t seed = 3) {
  std::vector<std::unique_ptr<WindowSource>> out;
  StreamOptions opts;
  opts.window = window;
  opts.noise_prob = 0.0;
  for (std::size_t i = 0; i < lanes; ++i) {
    out.push_back(std::make_unique<TokenStream>(text_ids(), opts, seed + i));
  }
  return out;
}

TrainConfig small_train(std::uint64_t steps = 20) {
  TrainConfig t;
  t.max_steps = steps;
  t.accum_steps = 2;
  t.micro_batch = 1;
  return t;
}

std::string file_bytes(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string &name) {
  auto p = std::filesystem::temp_directory_path() / ("cawn_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

} // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  c.max_steps = 1000;
  CHECK(lr_at(0, c) == 0.0);
  CHECK(lr_at(25, c) == doctest::Approx(4e-4).epsilon(1e-12));
  CHECK(lr_at(50, c) == doctest::Approx(8e-4).epsilon(1e-12));
  CHECK(lr_at(525, c) == doctest::Approx(4e-4).epsilon(1e-12));
  CHECK(std::abs(lr_at(1000, c)) < 1e-18);
  double prev = lr_at(50, c);
  for (std::uint64_t s = 51; s <= 1000; ++s) {
    const double lr = lr_at(s, c);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.accum_steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.warmup_frac = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  JsonReader r(to_json(c), "train");
  TrainConfig back;
  back.lr_max = 1.0;
  read_train_config(r, back);
  CHECK(to_json(back) == to_json(c));
}

TEST_CASE("non-finite loss skips the step without touching parameters") {
  Trainer t(init_weights(small_config()), small_train(), text_lanes(1, 16));
  t.step();
  const auto params = parameter_hash(t.weights());
  const auto opt = t.optimizer().state_hash();
  const auto updates = t.optimizer().updates();
  t.hooks.on_loss = [](std::uint64_t, std::size_t micro, Tensor &loss) {
    if (micro == 1) {
      loss = Tensor::scalar(std::numeric_limits<double>::quiet_NaN());
    }
  };
  const StepMetrics m = t.step();
  CHECK(m.skipped);
  CHECK(m.step == 1);
  CHECK(m.lr == lr_at(1, small_train()));
  CHECK(parameter_hash(t.weights()) == params);
  CHECK(t.optimizer().state_hash() == opt);
  CHECK(t.optimizer().updates() == updates);
  CHECK(t.step_count() == 2);
  for (const auto &p : t.weights().parameters()) {
    if (p.tensor.has_grad()) {
      for (double g : p.tensor.grad()) {
        CHECK(g == 0.0);
      }
    }
  }
  t.hooks = {};
  const StepMetrics next = t.step();
  CHECK_FALSE(next.skipped);
  CHECK(next.lr == lr_at(2, small_train()));
  CHECK(parameter_hash(t.weights()) != params);
}

TEST_CASE("exploding gradient norm skips the step") {
  Trainer t(init_weights(small_config()), small_train(), text_lanes(1, 16));
  const auto params = parameter_hash(t.weights());
  const auto opt = t.optimizer().state_hash();
  t.hooks.on_grads = [](std::uint64_t, ModelWeights &w) {
    // Rescale so the global norm is exactly 2000.
    const double factor = 2000.0 / global_grad_norm(w);
    for (auto &p : w.parameters()) {
      if (p.tensor.has_grad()) {
        for (double &g : p.tensor.mutable_grad()) {
          g *= factor;
        }
      }
    }
  };
  const StepMetrics m = t.step();
  CHECK(m.skipped);
  CHECK(m.grad_norm == doctest::Approx(2000.0).epsilon(1e-9));
  CHECK(parameter_hash(t.weights()) == params);
  CHECK(t.optimizer().state_hash() == opt);
  CHECK(t.step_count() == 1);
}

TEST_CASE("gradient accumulation equals one large batch") {
  const ModelWeights w = init_weights(small_config(4));
  auto lanes = text_lanes(2, 12, 5);
  const MicroBatch both = next_micro_batch(lanes);
  auto split = [&](std::size_t lane) {
    MicroBatch b;
    const std::size_t t = both.tokens.steps;
    b.tokens = {1, t, {both.tokens.ids.begin() + static_cast<long>(lane * t),
                       both.tokens.ids.begin() + static_cast<long>((lane + 1) * t)}};
    b.targets.assign(both.targets.begin() + static_cast<long>(lane * t),
                     both.targets.begin() + static_cast<long>((lane + 1) * t));
    b.mask.assign(both.mask.begin() + static_cast<long>(lane * t),
                  both.mask.begin() + static_cast<long>((lane + 1) * t));
    b.reset = {both.reset[lane]};
    return b;
  };
  const ForwardOptions opts{Mode::Eval, 0.0, 0};
  auto grads = [&](const ModelWeights &m) {
    std::vector<double> g;
    for (const auto &p : m.parameters()) {
      const auto v = p.tensor.has_grad() ? std::vector<double>(p.tensor.grad().begin(), p.tensor.grad().end())
                                         : std::vector<double>(p.tensor.numel(), 0.0);
      g.insert(g.end(), v.begin(), v.end());
    }
    return g;
  };

  ModelWeights big = w.clone();
  std::vector<SequenceState> carried;
  micro_loss(big, both, carried, opts).backward();
  ModelWeights acc = w.clone();
  for (std::size_t lane = 0; lane < 2; ++lane) {
    std::vector<SequenceState> c;
    scale(micro_loss(acc, split(lane), c, opts), 0.5).backward();
  }
  const auto a = grads(big), b = grads(acc);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("carried state never links consecutive micro-batch graphs") {
  const ModelWeights w = init_weights(small_config(6));
  auto lanes = text_lanes(1, 10);
  std::vector<SequenceState> carried;
  const ForwardOptions opts{Mode::Eval, 0.0, 0};
  const Tensor first = micro_loss(w, next_micro_batch(lanes), carried, opts);
  REQUIRE(carried.size() == 1);
  CHECK(carried[0].size() == 2);
  const Tensor second = micro_loss(w, next_micro_batch(lanes), carried, opts);

  std::set<const void *> leaves;
  for (const auto &p : w.parameters()) {
    leaves.insert(p.tensor.id());
  }
  const auto a = graph_nodes(first), b = graph_nodes(second);
  const std::set<const void *> in_first(a.begin(), a.end());
  for (auto id : b) {
    if (in_first.count(id)) {
      CHECK(leaves.count(id) == 1);
    }
  }
  CHECK(second.requires_grad());
}

TEST_CASE("carried state changes the next micro-batch") {
  const ModelWeights w = init_weights(small_config(7));
  auto lanes = text_lanes(1, 10);
  const MicroBatch a = next_micro_batch(lanes), b = next_micro_batch(lanes);
  const ForwardOptions opts{Mode::Eval, 0.0, 0};
  std::vector<SequenceState> carried;
  micro_loss(w, a, carried, opts);
  std::vector<SequenceState> fresh;
  const double with = micro_loss(w, b, carried, opts).item();
  const double without = micro_loss(w, b, fresh, opts).item();
  CHECK(with != without);

  // A reset lane ignores what it carried.
  MicroBatch r = b;
  r.reset = {true};
  std::vector<SequenceState> stale = carried;
  std::vector<SequenceState> none;
  CHECK(micro_loss(w, r, stale, opts).item() == micro_loss(w, r, none, opts).item());
}

TEST_CASE("training overfits a short text") {
  TrainConfig tc = small_train(80);
  tc.lr_max = 1e-2;
  tc.warmup_frac = 0.1;
  tc.micro_batch = 2;
  Trainer t(init_weights(small_config(8)), tc, text_lanes(2, 24));
  double first = 0.0, last = 0.0;
  for (std::uint64_t s = 0; s < tc.max_steps; ++s) {
    const StepMetrics m = t.step();
    CHECK_FALSE(m.skipped);
    if (s == 0) {
      first = m.loss;
    }
    last = m.loss;
  }
  INFO("first " << first << " last " << last);
  CHECK(first == doctest::Approx(std::log(259.0)).epsilon(0.02));
  CHECK(last < 0.5 * first);
}

TEST_CASE("two layers memorise a repeating 64-byte string in 50 steps") {
  const std::string text = "the quick brown fox jumps over the lazy dog; the dog sleeps on. ";
  REQUIRE(text.size() == 64);
  ModelConfig mc;
  mc.layers = 2;
  mc.seed = 5;
  TrainConfig tc;
  tc.max_steps = 50;
  tc.accum_steps = 4;
  tc.lr_max = 1e-2;
  StreamOptions opts;
  opts.window = 64;
  opts.noise_prob = 0.0;
  std::vector<std::unique_ptr<WindowSource>> lanes;
  lanes.push_back(std::make_unique<TokenStream>(byte_tokenize(text), opts, 4));
  Trainer t(init_weights(mc), tc, std::move(lanes));
  double last = 0.0;
  for (std::uint64_t s = 0; s < tc.max_steps; ++s) {
    last = t.step().loss;
  }
  INFO("final loss " << last);
  CHECK(last < std::log(259.0));
  CHECK(last < 1.0);
}

TEST_CASE("training is deterministic given the seed") {
  auto run = [] {
    Trainer t(init_weights(small_config(9)), small_train(4), text_lanes(1, 16));
    for (int i = 0; i < 4; ++i) {
      t.step();
    }
    return parameter_hash(t.weights());
  };
  CHECK(run() == run());
}

TEST_CASE("evaluate a uniform model") {
  ModelWeights w = init_weights(small_config(10));
  for (double &v : w.embedding.mutable_data()) {
    v = 0.0;
  }
  StreamOptions opts;
  opts.window = 20;
  opts.noise_prob = 0.0;
  TokenStream s(text_ids(), opts, 1);
  const EvalResult r = evaluate(w, s, 5);
  CHECK(r.tokens == 100);
  CHECK(r.loss == doctest::Approx(std::log(259.0)).epsilon(1e-12));
  CHECK(r.perplexity == doctest::Approx(259.0).epsilon(1e-10));
}

TEST_CASE("metrics log") {
  const auto path = scratch("metrics.csv");
  {
    MetricsLog log(path.string(), 42);
    StepMetrics m;
    m.step = 3;
    m.loss = 1.5;
    m.skipped = true;
    log.write(m);
  }
  const std::string text = file_bytes(path);
  CHECK(text.rfind("# seed=42\nstep,micro_loss,lr,grad_norm,skipped,eps\n3,1.5,0,0,1,0\n", 0) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint round trip is byte exact") {
  const auto dir = scratch("ckpt_a"), again = scratch("ckpt_b");
  ModelWeights w = init_weights(small_config(11));
  save_checkpoint(dir.string(), w, 17);
  const Checkpoint back = load_checkpoint(dir.string());
  CHECK(back.step == 17);
  CHECK(to_json(back.weights.config) == to_json(w.config));
  const auto a = w.parameters(), b = back.weights.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    const auto x = a[i].tensor.to_vector(), y = b[i].tensor.to_vector();
    for (std::size_t k = 0; k < x.size(); ++k) {
      CHECK(y[k] == static_cast<double>(static_cast<float>(x[k])));
    }
    CHECK(b[i].tensor.requires_grad());
  }
  save_checkpoint(again.string(), back.weights, back.step);
  CHECK(file_bytes(dir / "manifest.json") == file_bytes(again / "manifest.json"));
  CHECK(file_bytes(dir / "tensors.bin") == file_bytes(again / "tensors.bin"));
  CHECK(std::filesystem::file_size(dir / "tensors.bin") == count_params(w) * 4);

  const CheckpointManifest m = read_manifest(dir.string());
  CHECK(m.step == 17);
  CHECK(m.tensors.size() == a.size());
  CHECK(m.tensors.front().name == "embedding");
  CHECK(m.tensors.front().offset == 0);
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(again);
}

TEST_CASE("damaged or missing checkpoints are rejected") {
  CHECK_THROWS_AS(load_checkpoint(scratch("missing").string()), IoError);
  const auto dir = scratch("ckpt_bad");
  save_checkpoint(dir.string(), init_weights(small_config(12)), 0);
  std::filesystem::resize_file(dir / "tensors.bin", 16);
  CHECK_THROWS_AS(load_checkpoint(dir.string()), IoError);
  std::filesystem::remove(dir / "tensors.bin");
  CHECK_THROWS_AS(load_checkpoint(dir.string()), IoError);
  std::filesystem::remove_all(dir);
}
