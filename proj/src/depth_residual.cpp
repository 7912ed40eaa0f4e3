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

#include "cawn/depth_residual.hpp"

#include <cmath>

#include "cawn/ops.hpp"

namespace cawn {

DepthQuery DepthQuery::init(std::size_t dim, double std_dev, std::mt19937_64 &rng) {
  std::normal_distribution<double> dist(0.0, std_dev);
  std::vector<double> q(dim);
  for (auto &v : q) {
    v = dist(rng);
  }
  return {Tensor::from({dim, 1}, std::move(q), true), Tensor::full({dim}, 1.0, true)};
}

StreamArchive::StreamArchive(Tensor initial) : partial_(std::move(initial)) {}

void StreamArchive::accumulate(const Tensor &delta) {
  if (delta.shape() != partial_.shape()) {
    throw ShapeError("accumulate: stream " + shape_str(partial_.shape()) + " and delta " +
                     shape_str(delta.shape()));
  }
  partial_ = add(partial_, delta);
}

void StreamArchive::sever() {
  blocks_.push_back(partial_);
  partial_ = Tensor::zeros(partial_.shape());
}

namespace {

std::vector<Tensor> candidates(const StreamArchive &archive) {
  if (!archive.partial().defined()) {
    throw InternalError("attend_depth: empty candidate set");
  }
  std::vector<Tensor> all = archive.blocks();
  all.push_back(archive.partial());
  return all;
}

} // namespace

Tensor depth_weights(const StreamArchive &archive, const DepthQuery &q) {
  const auto all = candidates(archive);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(all[0].dim(1)));
  std::vector<Tensor> logits;
  logits.reserve(all.size());
  for (const auto &v : all) {
    logits.push_back(scale(matmul(rms_norm(v, q.key_gain), q.query), inv_sqrt_d));
  }
  return softmax(concat(logits, 1), 1);
}

Tensor attend_depth(const StreamArchive &archive, const DepthQuery &q) {
  const auto all = candidates(archive);
  if (all.size() == 1) {
    return all[0];
  }
  const Tensor weights = depth_weights(archive, q);
  auto columns = split(weights, std::vector<std::size_t>(all.size(), 1), 1);
  Tensor h = mul(all[0], columns[0]);
  for (std::size_t n = 1; n < all.size(); ++n) {
    h = add(h, mul(all[n], columns[n]));
  }
  return h;
}

} // namespace cawn
