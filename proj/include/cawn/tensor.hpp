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

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// Every op result keeps shared references to its inputs together with a
// backward closure, so the graph is exactly the set of nodes reachable from
// the loss. Results of ops whose inputs do not require gradients carry no
// closure and no parent links; inference therefore never builds a graph.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cawn/error.hpp"
#include "cawn/memory_stats.hpp"

namespace cawn {

using Shape = std::vector<std::size_t>;

/// Storage precision. Values are always held in doubles; F32 tensors are
/// rounded to the nearest float after every op, so they carry exactly the
/// information a 32-bit buffer would.
enum class Dtype : std::uint8_t { F64, F32 };

std::size_t numel(const Shape &shape);
std::string shape_str(const Shape &shape);

using Storage = std::vector<double, TrackingAllocator<double>>;

class Tensor;

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node &self)>;

struct Node {
  Shape shape;
  Storage value;
  Storage grad; // empty until the first accumulation
  Dtype dtype = Dtype::F64;
  bool requires_grad = false;
  const char *op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  /// Grad buffer, allocated (zeroed) on first use.
  std::span<double> grad_buffer();
};

} // namespace detail

class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape &shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  Dtype dtype() const;
  bool requires_grad() const;
  const char *op_name() const;

  std::span<const double> data() const;
  /// In-place access for leaves (parameters, optimizer updates).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t row, std::size_t col) const;
  std::vector<double> to_vector() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Leaf copy of the values, cut from any graph.
  Tensor detach() const;
  /// Deep leaf copy keeping requires_grad.
  Tensor clone() const;
  Tensor to(Dtype dtype) const;
  void set_requires_grad(bool on);

  /// Reverse-mode sweep from a scalar. Gradients accumulate into every
  /// reachable node that requires them.
  void backward() const;

  /// Identity of the underlying node, for graph-boundary checks.
  const void *id() const { return node_.get(); }

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
  std::shared_ptr<detail::Node> node_;
};

/// Nodes reachable from `root`, in topological order (inputs first).
std::vector<const void *> graph_nodes(const Tensor &root);

namespace detail {

/// Builds an op result. The closure and parent links are dropped when no
/// parent requires gradients.
Tensor make_result(const char *op, Shape shape, Storage values,
                   std::vector<Tensor> parents, BackwardFn backward);

} // namespace detail

} // namespace cawn
