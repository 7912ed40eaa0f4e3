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

// Command-line entry point. Subcommands share one JSON run config with
// `--a.b value` overrides; flags override both.

#pragma once

#include <string>
#include <vector>

#include "cawn/corpus.hpp"
#include "cawn/model.hpp"
#include "cawn/runtime.hpp"
#include "cawn/trainer.hpp"

namespace cawn {

struct DataConfig {
  std::string task = "text"; // text | recall
  std::string text;          // token source for the text task
  std::size_t window = 64;
  double noise_prob = 0.1;
  std::size_t eval_windows = 16;
  RecallOptions recall;
};

struct RunOptions {
  std::string checkpoint = "checkpoint";
  std::string out;
  std::vector<std::size_t> lengths{256, 512, 1024};
  std::size_t chunk_len = 1024;
  bool chunked = true;
  std::size_t trials = 50;
  std::string prompt;
  std::size_t tokens = 64;
  double temperature = 0.0; // 0 = greedy
};

struct RunConfig {
  std::uint64_t seed = 1234; // root seed; copied into every component
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  RetrievalSpec retrieval = RetrievalSpec::standard();
  RunOptions run;

  void validate() const;
  /// Pushes the root seed into the component configs.
  void resolve_seeds();
};

nlohmann::json to_json(const RunConfig &config);
RunConfig run_config_from_json(const nlohmann::json &root);

/// Data lanes for training per `config.data`, one per micro-batch lane.
std::vector<std::unique_ptr<WindowSource>> make_lanes(const RunConfig &config);

int cli_main(int argc, char **argv);

} // namespace cawn
