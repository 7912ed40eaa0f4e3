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

#include "cawn/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "cawn/checkpoint.hpp"

namespace cawn {

namespace {

namespace fs = std::filesystem;

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissingCheckpoint = 3;

class MissingCheckpoint : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::vector<std::size_t> parse_lengths(const std::string &csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (item.empty() || used != item.size()) {
      throw ConfigError("run.lengths", "expected comma-separated integers, got \"" + csv + "\"");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

unsigned thread_cap() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const char *env = std::getenv("CAWN_THREADS");
  if (!env) {
    return hw;
  }
  char *end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1) {
    throw ConfigError("CAWN_THREADS", "must be a positive integer");
  }
  return static_cast<unsigned>(v);
}

Checkpoint load_or_fail(const std::string &dir) {
  if (!fs::exists(fs::path(dir) / "manifest.json")) {
    throw MissingCheckpoint("checkpoint not found: " + dir);
  }
  return load_checkpoint(dir);
}

std::ostream &open_out(const std::string &path, std::ofstream &file) {
  if (path.empty() || path == "-") {
    return std::cout;
  }
  file.open(path);
  if (!file) {
    throw IoError("cannot write " + path);
  }
  return file;
}

std::size_t text_tokens(const RunConfig &c, std::vector<std::int32_t> &out) {
  if (c.data.text.empty()) {
    throw ConfigError("data.text", "required for the text task");
  }
  out = read_token_file(c.data.text);
  if (out.size() < 2) {
    throw ConfigError("data.text", "needs at least two bytes");
  }
  return out.size();
}

int cmd_train(const RunConfig &c, bool dry_run) {
  if (dry_run) {
    std::cout << "config ok\nparameters " << count_params(init_weights(c.model)) << "\n";
    return 0;
  }
  Trainer trainer(init_weights(c.model), c.train, make_lanes(c));
  const std::string metrics_path = c.run.out.empty() ? "metrics.csv" : c.run.out;
  MetricsLog log(metrics_path, c.seed);
  double first = 0.0, last = 0.0;
  for (std::uint64_t s = 0; s < c.train.max_steps; ++s) {
    const StepMetrics m = trainer.step();
    log.write(m);
    if (s == 0) {
      first = m.loss;
    }
    if (!m.skipped) {
      last = m.loss;
    }
    if (m.skipped) {
      std::cout << "step " << m.step << " skipped: " << m.skip_reason << std::endl;
    } else if (s % c.train.log_every == 0 || s + 1 == c.train.max_steps) {
      std::cout << "step " << m.step << " loss " << m.loss << " lr " << m.lr << " grad_norm "
                << m.grad_norm << std::endl;
    }
    const bool periodic = c.train.checkpoint_every && (s + 1) % c.train.checkpoint_every == 0;
    if (periodic || s + 1 == c.train.max_steps) {
      save_checkpoint(c.run.checkpoint, trainer.weights(), trainer.step_count());
    }
  }
  std::cout << "initial loss " << first << " final loss " << last << "\n";
  return 0;
}

int cmd_eval(const RunConfig &c) {
  const Checkpoint ck = load_or_fail(c.run.checkpoint);
  std::vector<std::int32_t> ids;
  text_tokens(c, ids);
  StreamOptions opts;
  opts.window = c.data.window;
  TokenStream stream(std::move(ids), opts, c.seed);
  const EvalResult r = evaluate(ck.weights, stream, c.data.eval_windows);
  std::cout << "loss " << r.loss << " perplexity " << r.perplexity << " tokens " << r.tokens
            << "\n";
  return 0;
}

int cmd_generate(const RunConfig &c) {
  const Checkpoint ck = load_or_fail(c.run.checkpoint);
  SamplerConfig sampler;
  if (c.run.temperature > 0.0) {
    sampler.kind = SamplerConfig::Kind::Temperature;
    sampler.temperature = c.run.temperature;
  }
  sampler.seed = c.seed;
  DecodeSession session(inference_weights(ck.weights), sampler);
  std::vector<std::int32_t> prompt{tokens::kBos};
  const auto body = byte_tokenize(c.run.prompt);
  prompt.insert(prompt.end(), body.begin(), body.end());
  session.prefill(prompt, c.run.chunk_len);
  std::cout << c.run.prompt << byte_detokenize(session.decode(c.run.tokens)) << "\n";
  return 0;
}

int cmd_bench(const RunConfig &c, bool has_checkpoint) {
  const ModelWeights weights =
      has_checkpoint ? load_or_fail(c.run.checkpoint).weights : init_weights(c.model);
  const auto rows = bench_memory(inference_weights(weights), c.run.lengths, c.run.chunked,
                                 c.run.chunk_len, c.seed, &std::cerr);
  std::ofstream file;
  write_bench_csv(open_out(c.run.out, file), rows, c.seed);
  return 0;
}

int cmd_retrieval(const RunConfig &c) {
  const Checkpoint ck = load_or_fail(c.run.checkpoint);
  const auto report = run_retrieval(inference_weights(ck.weights), c.retrieval, c.run.lengths,
                                    c.run.trials, c.run.chunk_len, thread_cap());
  std::ofstream file;
  write_retrieval_report(open_out(c.run.out, file), report, c.seed);
  return 0;
}

int cmd_inspect(const RunConfig &c) {
  if (!fs::exists(fs::path(c.run.checkpoint) / "manifest.json")) {
    throw MissingCheckpoint("checkpoint not found: " + c.run.checkpoint);
  }
  const CheckpointManifest m = read_manifest(c.run.checkpoint);
  std::size_t params = 0;
  for (const auto &t : m.tensors) {
    params += numel(t.shape);
  }
  std::cout << "step " << m.step << "\n";
  std::cout << "tensors " << m.tensors.size() << "\n";
  std::cout << "parameters " << params << "\n";
  std::cout << "blob_bytes " << m.blob_bytes << "\n";
  std::cout << "config " << to_json(m.config).dump() << "\n";
  for (const auto &t : m.tensors) {
    std::cout << "  " << t.name << " " << shape_str(t.shape) << " @" << t.offset << "\n";
  }
  return 0;
}

} // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (data.task != "text" && data.task != "recall") {
    throw ConfigError("data.task", "must be \"text\" or \"recall\"");
  }
  if (data.window == 0) {
    throw ConfigError("data.window", "must be positive");
  }
  if (!(data.noise_prob >= 0.0 && data.noise_prob <= 1.0)) {
    throw ConfigError("data.noise_prob", "must lie in [0, 1]");
  }
  if (data.recall.episode_windows.empty() || data.recall.query_gap == 0) {
    throw ConfigError("data.recall", "episode_windows and query_gap must be non-empty/positive");
  }
  for (auto w : data.recall.episode_windows) {
    if (w == 0) {
      throw ConfigError("data.recall.episode_windows", "entries must be positive");
    }
  }
  if (run.chunk_len == 0) {
    throw ConfigError("run.chunk_len", "must be positive");
  }
  if (run.temperature < 0.0) {
    throw ConfigError("run.temperature", "must be non-negative");
  }
  if (model.vocab < tokens::kVocab) {
    throw ConfigError("model.vocab", "must cover the byte vocabulary (259)");
  }
  retrieval.validate();
}

void RunConfig::resolve_seeds() {
  model.seed = seed;
  train.seed = seed;
  retrieval.seed = seed;
}

nlohmann::json to_json(const RunConfig &c) {
  return {{"seed", c.seed},
          {"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"data",
           {{"task", c.data.task},
            {"text", c.data.text},
            {"window", c.data.window},
            {"noise_prob", c.data.noise_prob},
            {"eval_windows", c.data.eval_windows},
            {"recall",
             {{"episode_windows", c.data.recall.episode_windows},
              {"query_gap", c.data.recall.query_gap},
              {"answers_only", c.data.recall.answers_only}}}}},
          {"retrieval", to_json(c.retrieval)},
          {"run",
           {{"checkpoint", c.run.checkpoint},
            {"out", c.run.out},
            {"lengths", c.run.lengths},
            {"chunk_len", c.run.chunk_len},
            {"chunked", c.run.chunked},
            {"trials", c.run.trials},
            {"prompt", c.run.prompt},
            {"tokens", c.run.tokens},
            {"temperature", c.run.temperature}}}};
}

RunConfig run_config_from_json(const nlohmann::json &root) {
  RunConfig c;
  JsonReader r(root, "");
  r.get("seed", c.seed);
  {
    JsonReader m = r.child("model");
    read_model_config(m, c.model);
  }
  {
    JsonReader t = r.child("train");
    read_train_config(t, c.train);
  }
  {
    JsonReader d = r.child("data");
    d.get("task", c.data.task);
    d.get("text", c.data.text);
    d.get("window", c.data.window);
    d.get("noise_prob", c.data.noise_prob);
    d.get("eval_windows", c.data.eval_windows);
    JsonReader rc = d.child("recall");
    rc.get("episode_windows", c.data.recall.episode_windows);
    rc.get("query_gap", c.data.recall.query_gap);
    rc.get("answers_only", c.data.recall.answers_only);
    rc.finish();
    d.finish();
  }
  {
    JsonReader s = r.child("retrieval");
    read_retrieval_spec(s, c.retrieval);
  }
  {
    JsonReader o = r.child("run");
    o.get("checkpoint", c.run.checkpoint);
    o.get("out", c.run.out);
    o.get("lengths", c.run.lengths);
    o.get("chunk_len", c.run.chunk_len);
    o.get("chunked", c.run.chunked);
    o.get("trials", c.run.trials);
    o.get("prompt", c.run.prompt);
    o.get("tokens", c.run.tokens);
    o.get("temperature", c.run.temperature);
    o.finish();
  }
  r.finish();
  return c;
}

std::vector<std::unique_ptr<WindowSource>> make_lanes(const RunConfig &c) {
  std::vector<std::unique_ptr<WindowSource>> lanes;
  std::vector<std::int32_t> ids;
  if (c.data.task == "text") {
    text_tokens(c, ids);
  }
  for (std::size_t lane = 0; lane < c.train.micro_batch; ++lane) {
    const std::uint64_t seed = c.seed * 1000003ULL + lane;
    if (c.data.task == "recall") {
      RecallOptions opts = c.data.recall;
      opts.window = c.data.window;
      lanes.push_back(std::make_unique<RecallStream>(c.retrieval, opts, seed));
    } else {
      StreamOptions opts;
      opts.window = c.data.window;
      opts.noise_prob = c.data.noise_prob;
      opts.noise_spec = c.retrieval;
      lanes.push_back(std::make_unique<TokenStream>(ids, opts, seed));
    }
  }
  return lanes;
}

int cli_main(int argc, char **argv) {
  memory_stats::retain_freed_blocks();
  CLI::App app{"Continuous acoustic wave network: train, evaluate, generate, benchmark"};
  app.require_subcommand(1, 1);

  std::string config_path, lengths_csv;
  std::optional<std::uint64_t> seed, steps;
  std::optional<std::size_t> chunk_len, trials, n_tokens;
  std::optional<std::string> checkpoint, out, prompt;
  bool dry_run = false, chunked = false, unchunked = false;

  auto common = [&](CLI::App *sub) {
    sub->add_option("--config", config_path, "JSON run config");
    sub->add_option("--seed", seed, "root seed");
    sub->add_option("--checkpoint", checkpoint, "checkpoint directory");
    sub->add_option("--out", out, "output file");
    sub->add_flag("--dry-run", dry_run, "validate the config and print the parameter count");
    sub->allow_extras();
  };
  auto *train = app.add_subcommand("train", "train a model");
  common(train);
  train->add_option("--steps", steps, "optimizer steps");
  auto *eval = app.add_subcommand("eval", "loss and perplexity on data.text");
  common(eval);
  auto *generate = app.add_subcommand("generate", "continue a prompt");
  common(generate);
  generate->add_option("--prompt", prompt, "prompt text");
  generate->add_option("--tokens", n_tokens, "tokens to generate");
  generate->add_option("--chunk-len", chunk_len, "prefill chunk length");
  auto *bench = app.add_subcommand("bench", "state size, peak allocation and throughput");
  common(bench);
  bench->add_option("--lengths", lengths_csv, "comma-separated lengths");
  bench->add_option("--chunk-len", chunk_len, "prefill chunk length");
  bench->add_flag("--chunked", chunked, "prefill in chunks (default)");
  bench->add_flag("--unchunked", unchunked, "prefill each length in one pass");
  auto *retrieval = app.add_subcommand("retrieval", "needle retrieval report");
  common(retrieval);
  retrieval->add_option("--lengths", lengths_csv, "comma-separated context lengths");
  retrieval->add_option("--chunk-len", chunk_len, "prefill chunk length");
  retrieval->add_option("--trials", trials, "contexts per length");
  auto *inspect = app.add_subcommand("inspect-checkpoint", "print a checkpoint manifest summary");
  common(inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitConfig;
  }

  CLI::App *sub = app.get_subcommands().front();
  try {
    nlohmann::json root = config_path.empty() ? nlohmann::json::object()
                                              : read_json_file(config_path);
    // Dot-path overrides arrive as extras: --a.b value or --a.b=value.
    const auto extras = sub->remaining();
    for (std::size_t i = 0; i < extras.size(); ++i) {
      const std::string &arg = extras[i];
      if (arg.rfind("--", 0) != 0 || arg.find('.') == std::string::npos) {
        std::cerr << "error: unknown argument " << arg << "\n" << sub->help();
        return kExitConfig;
      }
      std::string key = arg.substr(2), value;
      if (const auto eq = key.find('='); eq != std::string::npos) {
        value = key.substr(eq + 1);
        key = key.substr(0, eq);
      } else if (i + 1 < extras.size()) {
        value = extras[++i];
      } else {
        std::cerr << "error: override " << arg << " needs a value\n";
        return kExitConfig;
      }
      apply_override(root, key, value);
    }
    RunConfig c = run_config_from_json(root);
    if (seed) {
      c.seed = *seed;
    }
    if (steps) {
      c.train.max_steps = *steps;
    }
    if (checkpoint) {
      c.run.checkpoint = *checkpoint;
    }
    if (out) {
      c.run.out = *out;
    }
    if (!lengths_csv.empty()) {
      c.run.lengths = parse_lengths(lengths_csv);
    }
    if (chunk_len) {
      c.run.chunk_len = *chunk_len;
    }
    if (trials) {
      c.run.trials = *trials;
    }
    if (prompt) {
      c.run.prompt = *prompt;
    }
    if (n_tokens) {
      c.run.tokens = *n_tokens;
    }
    if (unchunked) {
      c.run.chunked = false;
    }
    if (chunked && unchunked) {
      throw ConfigError("run.chunked", "--chunked and --unchunked are exclusive");
    }
    c.resolve_seeds();
    c.validate();
    thread_cap();

    const std::string name = sub->get_name();
    if (dry_run && name != "train") {
      std::cout << "config ok\nparameters " << count_params(init_weights(c.model)) << "\n";
      return 0;
    }
    if (name == "train") {
      return cmd_train(c, dry_run);
    }
    if (name == "eval") {
      return cmd_eval(c);
    }
    if (name == "generate") {
      return cmd_generate(c);
    }
    if (name == "bench") {
      return cmd_bench(c, checkpoint.has_value());
    }
    if (name == "retrieval") {
      return cmd_retrieval(c);
    }
    return cmd_inspect(c);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingCheckpoint &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingCheckpoint;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}

} // namespace cawn
