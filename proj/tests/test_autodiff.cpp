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
#include <functional>
#include <random>
#include <string>

#include "cawn/ops.hpp"
#include "doctest.h"
#include "grad_check.hpp"

using namespace cawn;
using cawn::testing::grad_check;
using cawn::testing::random_tensor;
using cawn::testing::random_weights;

namespace {

constexpr int kSeeds = 20;
constexpr double kTol = 1e-4;

// Runs `build` under 20 seeds with a random linear read-out of its output.
void check_primitive(const char *name,
                     const std::function<std::pair<std::vector<Tensor>, std::function<Tensor()>>(
                         std::mt19937_64 &)> &build) {
  double worst = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    auto [inputs, fn] = build(rng);
    const auto w = random_weights(fn().numel(), rng);
    auto loss = [&, fn = fn] { return weighted_sum(fn(), w); };
    worst = std::max(worst, grad_check(inputs, loss).max_rel_err);
  }
  INFO(name << " worst relative error " << worst);
  CHECK(worst < kTol);
}

template <class Op> void check_unary(const char *name, Op op, double lo = -2.0, double hi = 2.0) {
  check_primitive(name, [&](std::mt19937_64 &rng) {
    Tensor x = random_tensor({3, 4}, rng, lo, hi);
    return std::make_pair(std::vector<Tensor>{x}, std::function<Tensor()>([x, op] { return op(x); }));
  });
}

} // namespace

TEST_CASE("closed-form values") {
  auto s = softmax(Tensor::from({1, 2}, {0.0, 0.0}), 1);
  CHECK(s.data()[0] == doctest::Approx(0.5));
  CHECK(s.data()[1] == doctest::Approx(0.5));

  auto r = rms_norm(Tensor::from({1, 4}, {2, 2, 2, 2}), Tensor::full({4}, 1.0));
  for (double v : r.data()) {
    CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
  }

  Tensor x = Tensor::from({1}, {0.0}, true);
  sum(sigmoid(x)).backward();
  CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("clamp gradient policies") {
  auto run = [](ClampGrad policy, double upstream) {
    Tensor x = Tensor::from({1}, {200.0}, true);
    Tensor y = clamp(x, -100.0, 100.0, policy);
    CHECK(y.item() == 100.0);
    weighted_sum(y, std::vector<double>{upstream}).backward();
    return x.grad()[0];
  };
  CHECK(run(ClampGrad::PassThrough, 1.0) == 1.0);
  CHECK(run(ClampGrad::ZeroOutside, 1.0) == 0.0);
  CHECK(run(ClampGrad::ClampGrad, 1.0) == 1.0);
  CHECK(run(ClampGrad::ClampGrad, 1e6) == 100.0);
  CHECK_THROWS_AS(clamp(Tensor::scalar(1.0), 1.0, 1.0), ConfigError);
}

TEST_CASE("ste threshold") {
  Tensor x = Tensor::from({1, 3}, {1e-4, 5e-3, 0.5}, true);
  Tensor y = ste_threshold(x, 1e-3);
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == 5e-3);
  sum(y).backward();
  for (double g : x.grad()) {
    CHECK(g == 1.0);
  }
}

TEST_CASE("primitive gradients match central differences") {
  check_primitive("matmul", [](std::mt19937_64 &rng) {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 3}, rng);
    return std::make_pair(std::vector<Tensor>{a, b},
                          std::function<Tensor()>([a, b] { return matmul(a, b); }));
  });
  for (Shape bs : {Shape{3, 4}, Shape{1, 4}, Shape{3, 1}, Shape{1, 1}}) {
    check_primitive("add", [bs](std::mt19937_64 &rng) {
      Tensor a = random_tensor({3, 4}, rng), b = random_tensor(bs, rng);
      return std::make_pair(std::vector<Tensor>{a, b},
                            std::function<Tensor()>([a, b] { return add(a, b); }));
    });
    check_primitive("sub", [bs](std::mt19937_64 &rng) {
      Tensor a = random_tensor({3, 4}, rng), b = random_tensor(bs, rng);
      return std::make_pair(std::vector<Tensor>{a, b},
                            std::function<Tensor()>([a, b] { return sub(a, b); }));
    });
    check_primitive("mul", [bs](std::mt19937_64 &rng) {
      Tensor a = random_tensor({3, 4}, rng), b = random_tensor(bs, rng);
      return std::make_pair(std::vector<Tensor>{a, b},
                            std::function<Tensor()>([a, b] { return mul(a, b); }));
    });
  }
  check_primitive("scale", [](std::mt19937_64 &rng) {
    Tensor a = random_tensor({3, 4}, rng);
    return std::make_pair(std::vector<Tensor>{a},
                          std::function<Tensor()>([a] { return scale(a, -1.7); }));
  });
  for (std::size_t axis : {0u, 1u}) {
    check_primitive("concat", [axis](std::mt19937_64 &rng) {
      Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
      return std::make_pair(std::vector<Tensor>{a, b},
                            std::function<Tensor()>([a, b, axis] { return concat({a, b}, axis); }));
    });
    check_primitive("split", [axis](std::mt19937_64 &rng) {
      Tensor a = random_tensor({3, 4}, rng);
      const std::vector<std::size_t> sizes =
          axis == 0 ? std::vector<std::size_t>{1, 2} : std::vector<std::size_t>{3, 1};
      return std::make_pair(std::vector<Tensor>{a}, std::function<Tensor()>([a, axis, sizes] {
                              auto parts = split(a, sizes, axis);
                              // Reuse both pieces, weighting them differently.
                              return concat({scale(parts[1], 2.0), parts[0]}, axis);
                            }));
    });
    check_primitive("softmax", [axis](std::mt19937_64 &rng) {
      Tensor a = random_tensor({3, 4}, rng, -3.0, 3.0);
      return std::make_pair(std::vector<Tensor>{a},
                            std::function<Tensor()>([a, axis] { return softmax(a, axis); }));
    });
  }
  check_primitive("reshape", [](std::mt19937_64 &rng) {
    Tensor a = random_tensor({3, 4}, rng);
    return std::make_pair(std::vector<Tensor>{a}, std::function<Tensor()>([a] {
                            return mul(reshape(a, {2, 6}), reshape(a, {2, 6}));
                          }));
  });
  check_primitive("transpose", [](std::mt19937_64 &rng) {
    Tensor a = random_tensor({3, 4}, rng);
    return std::make_pair(std::vector<Tensor>{a},
                          std::function<Tensor()>([a] { return matmul(transpose(a), a); }));
  });

  check_unary("sigmoid", [](const Tensor &x) { return sigmoid(x); }, -4.0, 4.0);
  check_unary("tanh", [](const Tensor &x) { return tanh(x); });
  check_unary("gelu", [](const Tensor &x) { return gelu(x); }, -3.0, 3.0);
  check_unary("silu", [](const Tensor &x) { return silu(x); }, -3.0, 3.0);
  check_unary("softplus", [](const Tensor &x) { return softplus(x); }, -4.0, 4.0);
  check_unary("exp", [](const Tensor &x) { return exp(x); });
  check_unary("log", [](const Tensor &x) { return log(x); }, 0.2, 3.0);
  check_unary("sin", [](const Tensor &x) { return sin(x); }, -4.0, 4.0);
  check_unary("cos", [](const Tensor &x) { return cos(x); }, -4.0, 4.0);

  check_primitive("rms_norm", [](std::mt19937_64 &rng) {
    Tensor x = random_tensor({3, 4}, rng), g = random_tensor({4}, rng, 0.5, 1.5);
    return std::make_pair(std::vector<Tensor>{x, g},
                          std::function<Tensor()>([x, g] { return rms_norm(x, g); }));
  });
  check_primitive("clamp", [](std::mt19937_64 &rng) {
    // Keep values at least 0.05 away from the bounds.
    std::vector<double> v(12);
    std::uniform_real_distribution<double> inside(-0.95, 0.95), mag(1.05, 2.0);
    std::bernoulli_distribution outside(0.3), neg(0.5);
    for (auto &e : v) {
      e = outside(rng) ? (neg(rng) ? -mag(rng) : mag(rng)) : inside(rng);
    }
    Tensor x = Tensor::from({3, 4}, v, true);
    return std::make_pair(std::vector<Tensor>{x},
                          std::function<Tensor()>([x] { return clamp(x, -1.0, 1.0); }));
  });
  for (std::size_t lanes : {1u, 2u}) {
    check_primitive("causal_depthwise_conv1d", [lanes](std::mt19937_64 &rng) {
      Tensor x = random_tensor({4, 3}, rng), k = random_tensor({3, 3}, rng);
      std::vector<double> ctx = random_weights(lanes * 2 * 3, rng);
      return std::make_pair(std::vector<Tensor>{x, k}, std::function<Tensor()>([x, k, lanes, ctx] {
                              return causal_depthwise_conv1d(x, k, lanes, ctx);
                            }));
    });
  }
  check_primitive("depthwise_conv_same", [](std::mt19937_64 &rng) {
    Tensor x = random_tensor({3, 4}, rng), k = random_tensor({2, 3}, rng);
    return std::make_pair(std::vector<Tensor>{x, k}, std::function<Tensor()>([x, k] {
                            return depthwise_conv_same(x, k, 2, 2);
                          }));
  });
  check_primitive("embedding_lookup", [](std::mt19937_64 &rng) {
    Tensor table = random_tensor({3, 4}, rng);
    return std::make_pair(std::vector<Tensor>{table}, std::function<Tensor()>([table] {
                            const std::vector<std::int32_t> ids{2, 0, 2, 1};
                            return embedding_lookup(table, ids);
                          }));
  });
  check_primitive("cross_entropy", [](std::mt19937_64 &rng) {
    Tensor logits = random_tensor({3, 4}, rng, -2.0, 2.0);
    return std::make_pair(std::vector<Tensor>{logits}, std::function<Tensor()>([logits] {
                            const std::vector<std::int32_t> targets{3, 0, 1};
                            const std::vector<std::uint8_t> mask{1, 0, 1};
                            return cross_entropy(logits, targets, mask);
                          }));
  });
}

TEST_CASE("shape errors name the op and both shapes") {
  Tensor a = Tensor::zeros({3, 4}), b = Tensor::zeros({3, 4});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError &e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[3,4]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, Tensor::zeros({2, 4})), ShapeError);
  CHECK_THROWS_AS(softmax(a, 2), ShapeError);
  CHECK_THROWS_AS(split(a, {1, 1}, 0), ShapeError);
  const std::vector<std::int32_t> bad{0, 1, 4};
  CHECK_THROWS_AS(cross_entropy(a, bad), RangeError);
}

TEST_CASE("shared subexpressions accumulate gradients") {
  // y = u * u + 3 u with u = 2x; dy/dx = 2 (2u + 3) = 8x + 6.
  Tensor x = Tensor::from({1}, {1.5}, true);
  Tensor u = scale(x, 2.0);
  Tensor y = add(mul(u, u), scale(u, 3.0));
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(8.0 * 1.5 + 6.0).epsilon(1e-15));
}

TEST_CASE("forward is deterministic") {
  auto run = [] {
    std::mt19937_64 rng(7);
    Tensor a = random_tensor({5, 6}, rng), b = random_tensor({6, 4}, rng);
    return softmax(gelu(matmul(a, b)), 1).to_vector();
  };
  CHECK(run() == run());
}

TEST_CASE("f32 storage rounds every result") {
  Tensor a = Tensor::from({1, 2}, {1.0 / 3.0, 2.0 / 3.0}).to(Dtype::F32);
  Tensor y = exp(a);
  CHECK(y.dtype() == Dtype::F32);
  for (double v : y.data()) {
    CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
}

TEST_CASE("ops without grad inputs record no graph") {
  Tensor a = Tensor::from({1, 2}, {1.0, 2.0});
  Tensor y = exp(mul(a, a));
  CHECK_FALSE(y.requires_grad());
  CHECK(graph_nodes(y).size() == 1);
}
