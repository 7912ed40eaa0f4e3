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

#include "cawn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace cawn {

std::size_t numel(const Shape &shape) {
  std::size_t n = 1;
  for (auto d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape &shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) {
      s += ",";
    }
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void round_to_f32(Storage &values) {
  for (auto &v : values) {
    v = static_cast<double>(static_cast<float>(v));
  }
}

std::shared_ptr<detail::Node> new_leaf(Shape shape, Storage values,
                                       bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

} // namespace

std::span<double> detail::Node::grad_buffer() {
  if (grad.empty()) {
    grad.assign(value.size(), 0.0);
  }
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Storage values(cawn::numel(shape), value);
  return Tensor(new_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  Storage storage(values.begin(), values.end());
  return Tensor(new_leaf(std::move(shape), std::move(storage), requires_grad));
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

const Shape &Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }
Dtype Tensor::dtype() const { return node_->dtype; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
const char *Tensor::op_name() const { return node_->op; }

std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor of shape " + shape_str(shape()) +
                     " is not a scalar");
  }
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  const auto &s = shape();
  const std::size_t cols = s.size() >= 2 ? s.back() : 1;
  return node_->value.at(row * cols + col);
}

std::vector<double> Tensor::to_vector() const {
  return {node_->value.begin(), node_->value.end()};
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto leaf = new_leaf(node_->shape, node_->value, false);
  leaf->dtype = node_->dtype;
  return Tensor(std::move(leaf));
}

Tensor Tensor::clone() const {
  auto leaf = new_leaf(node_->shape, node_->value, node_->requires_grad);
  leaf->dtype = node_->dtype;
  return Tensor(std::move(leaf));
}

Tensor Tensor::to(Dtype dtype) const {
  auto leaf = new_leaf(node_->shape, node_->value, node_->requires_grad);
  leaf->dtype = dtype;
  if (dtype == Dtype::F32) {
    round_to_f32(leaf->value);
  }
  return Tensor(std::move(leaf));
}

void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

namespace {

std::vector<detail::Node *> topo_order(detail::Node *root) {
  std::vector<detail::Node *> order;
  std::unordered_set<detail::Node *> seen;
  // Iterative post-order DFS; the graph can be deep for long op chains.
  std::vector<std::pair<detail::Node *, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node *parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

} // namespace

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward: root must be a scalar, got " +
                     shape_str(shape()));
  }
  if (!node_->requires_grad) {
    return;
  }
  auto order = topo_order(node_.get());
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node *node = *it;
    if (node->backward && !node->grad.empty()) {
      node->backward(*node);
    }
  }
}

std::vector<const void *> graph_nodes(const Tensor &root) {
  std::vector<const void *> ids;
  if (!root.defined()) {
    return ids;
  }
  for (auto *node : topo_order(root.node().get())) {
    ids.push_back(node);
  }
  return ids;
}

Tensor detail::make_result(const char *op, Shape shape, Storage values,
                           std::vector<Tensor> parents, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool needs_grad = false;
  for (const auto &p : parents) {
    needs_grad = needs_grad || p.requires_grad();
    if (p.dtype() == Dtype::F32) {
      node->dtype = Dtype::F32;
    }
  }
  if (node->dtype == Dtype::F32) {
    round_to_f32(node->value);
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->parents.reserve(parents.size());
    for (auto &p : parents) {
      node->parents.push_back(p.node());
    }
  }
  return Tensor(std::move(node));
}

namespace memory_stats {

namespace {
std::atomic<std::size_t> g_current{0};
std::atomic<std::size_t> g_peak{0};
} // namespace

std::size_t current_bytes() { return g_current.load(); }
std::size_t peak_bytes() { return g_peak.load(); }
void reset_peak() { g_peak.store(g_current.load()); }

void retain_freed_blocks() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

void detail::on_alloc(std::size_t bytes) {
  const std::size_t now = g_current.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

void detail::on_free(std::size_t bytes) { g_current.fetch_sub(bytes); }

} // namespace memory_stats

} // namespace cawn
