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

#include "cawn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace cawn {

using detail::make_result;
using detail::Node;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_fail(const char *op, const Shape &a, const Shape &b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                   " and " + shape_str(b));
}

void require_rank(const char *op, const Tensor &t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_str(t.shape()));
  }
}

Node &parent(Node &self, std::size_t i) { return *self.parents[i]; }

// Layout of a (possibly broadcast) right operand against a left operand.
struct Broadcast {
  std::size_t rows = 0, cols = 0;
  bool row_bcast = false, col_bcast = false;

  std::size_t index(std::size_t r, std::size_t c) const {
    return (row_bcast ? 0 : r) * (col_bcast ? 1 : cols) + (col_bcast ? 0 : c);
  }
};

Broadcast broadcast_for(const char *op, const Tensor &a, const Tensor &b) {
  Broadcast bc;
  if (a.shape() == b.shape()) {
    bc.rows = 1;
    bc.cols = a.numel();
    return bc;
  }
  if (a.rank() != 2) {
    shape_fail(op, a.shape(), b.shape());
  }
  std::size_t br = 0, bcols = 0;
  if (b.rank() == 2) {
    br = b.dim(0);
    bcols = b.dim(1);
  } else if (b.rank() == 1) {
    br = 1;
    bcols = b.dim(0);
  } else {
    shape_fail(op, a.shape(), b.shape());
  }
  bc.rows = a.dim(0);
  bc.cols = a.dim(1);
  bc.row_bcast = br == 1 && bc.rows != 1;
  bc.col_bcast = bcols == 1 && bc.cols != 1;
  if ((!bc.row_bcast && br != bc.rows) || (!bc.col_bcast && bcols != bc.cols)) {
    shape_fail(op, a.shape(), b.shape());
  }
  return bc;
}

enum class BinOp { Add, Sub, Mul };

Tensor binary(const char *op, BinOp kind, const Tensor &a, const Tensor &b) {
  const Broadcast bc = broadcast_for(op, a, b);
  auto av = a.data();
  auto bv = b.data();
  Storage out(a.numel());
  for (std::size_t r = 0; r < bc.rows; ++r) {
    for (std::size_t c = 0; c < bc.cols; ++c) {
      const std::size_t i = r * bc.cols + c;
      const double y = bv[bc.index(r, c)];
      switch (kind) {
      case BinOp::Add: out[i] = av[i] + y; break;
      case BinOp::Sub: out[i] = av[i] - y; break;
      case BinOp::Mul: out[i] = av[i] * y; break;
      }
    }
  }
  return make_result(op, a.shape(), std::move(out), {a, b}, [bc, kind](Node &self) {
    Node &pa = parent(self, 0);
    Node &pb = parent(self, 1);
    const auto &g = self.grad;
    if (pa.requires_grad) {
      auto ga = pa.grad_buffer();
      for (std::size_t r = 0; r < bc.rows; ++r) {
        for (std::size_t c = 0; c < bc.cols; ++c) {
          const std::size_t i = r * bc.cols + c;
          ga[i] += kind == BinOp::Mul ? g[i] * pb.value[bc.index(r, c)] : g[i];
        }
      }
    }
    if (pb.requires_grad) {
      auto gb = pb.grad_buffer();
      for (std::size_t r = 0; r < bc.rows; ++r) {
        for (std::size_t c = 0; c < bc.cols; ++c) {
          const std::size_t i = r * bc.cols + c;
          const std::size_t j = bc.index(r, c);
          switch (kind) {
          case BinOp::Add: gb[j] += g[i]; break;
          case BinOp::Sub: gb[j] -= g[i]; break;
          case BinOp::Mul: gb[j] += g[i] * pa.value[i]; break;
          }
        }
      }
    }
  });
}

template <class F, class D>
Tensor unary(const char *op, const Tensor &x, F f, D df) {
  auto xv = x.data();
  Storage out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = f(xv[i]);
  }
  return make_result(op, x.shape(), std::move(out), {x}, [df](Node &self) {
    Node &in = parent(self, 0);
    if (!in.requires_grad) {
      return;
    }
    auto g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * df(in.value[i], self.value[i]);
    }
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// outer x axis x inner decomposition of a shape around `axis`.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const char *op, const Shape &shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " invalid for shape " + shape_str(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) {
    v.outer *= shape[i];
  }
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) {
    v.inner *= shape[i];
  }
  return v;
}

} // namespace

Tensor matmul(const Tensor &a, const Tensor &b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    shape_fail("matmul", a.shape(), b.shape());
  }
  Storage out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node &self) {
    Node &pa = parent(self, 0);
    Node &pb = parent(self, 1);
    ConstMap g(self.grad.data(), m, n);
    if (pa.requires_grad) {
      MutMap(pa.grad_buffer().data(), m, k).noalias() +=
          g * ConstMap(pb.value.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MutMap(pb.grad_buffer().data(), k, n).noalias() +=
          ConstMap(pa.value.data(), m, k).transpose() * g;
    }
  });
}

Tensor add(const Tensor &a, const Tensor &b) { return binary("add", BinOp::Add, a, b); }
Tensor sub(const Tensor &a, const Tensor &b) { return binary("sub", BinOp::Sub, a, b); }
Tensor mul(const Tensor &a, const Tensor &b) { return binary("mul", BinOp::Mul, a, b); }

Tensor scale(const Tensor &a, double factor) {
  return unary("scale", a, [factor](double x) { return x * factor; },
               [factor](double, double) { return factor; });
}

Tensor concat(const std::vector<Tensor> &parts, std::size_t axis) {
  if (parts.empty()) {
    throw ShapeError("concat: no inputs");
  }
  Shape shape = parts[0].shape();
  const AxisView first = axis_view("concat", shape, axis);
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto &p : parts) {
    Shape probe = p.shape();
    if (probe.size() != shape.size()) {
      shape_fail("concat", shape, probe);
    }
    probe[axis] = shape[axis];
    if (probe != shape) {
      shape_fail("concat", parts[0].shape(), p.shape());
    }
    extents.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  shape[axis] = total;
  const std::size_t outer = first.outer, inner = first.inner;
  Storage out(numel(shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto src = parts[p].data();
    const std::size_t width = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * width, width,
                  out.begin() + o * total * inner + offset * inner);
    }
    offset += extents[p];
  }
  return make_result("concat", shape, std::move(out), parts,
                     [extents, outer, inner, total](Node &self) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < extents.size(); ++p) {
                         Node &in = parent(self, p);
                         const std::size_t width = extents[p] * inner;
                         if (in.requires_grad) {
                           auto g = in.grad_buffer();
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double *src =
                                 self.grad.data() + o * total * inner + offset * inner;
                             for (std::size_t i = 0; i < width; ++i) {
                               g[o * width + i] += src[i];
                             }
                           }
                         }
                         offset += extents[p];
                       }
                     });
}

std::vector<Tensor> split(const Tensor &t, const std::vector<std::size_t> &sizes,
                          std::size_t axis) {
  const AxisView v = axis_view("split", t.shape(), axis);
  std::size_t total = 0;
  for (auto s : sizes) {
    total += s;
  }
  if (total != v.extent) {
    throw ShapeError("split: sizes sum to " + std::to_string(total) +
                     " but axis has extent " + std::to_string(v.extent) +
                     " in shape " + shape_str(t.shape()));
  }
  std::vector<Tensor> result;
  auto src = t.data();
  std::size_t offset = 0;
  for (auto extent : sizes) {
    Shape shape = t.shape();
    shape[axis] = extent;
    const std::size_t width = extent * v.inner;
    Storage out(v.outer * width);
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(src.begin() + o * v.extent * v.inner + offset * v.inner, width,
                  out.begin() + o * width);
    }
    result.push_back(make_result(
        "split", shape, std::move(out), {t},
        [v, offset, width](Node &self) {
          Node &in = parent(self, 0);
          if (!in.requires_grad) {
            return;
          }
          auto g = in.grad_buffer();
          for (std::size_t o = 0; o < v.outer; ++o) {
            double *dst = g.data() + o * v.extent * v.inner + offset * v.inner;
            for (std::size_t i = 0; i < width; ++i) {
              dst[i] += self.grad[o * width + i];
            }
          }
        }));
    offset += extent;
  }
  return result;
}

Tensor reshape(const Tensor &t, Shape shape) {
  if (numel(shape) != t.numel()) {
    shape_fail("reshape", t.shape(), shape);
  }
  Storage out(t.data().begin(), t.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {t}, [](Node &self) {
    Node &in = parent(self, 0);
    if (!in.requires_grad) {
      return;
    }
    auto g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i];
    }
  });
}

Tensor transpose(const Tensor &t) {
  require_rank("transpose", t, 2);
  const std::size_t m = t.dim(0), n = t.dim(1);
  Storage out(m * n);
  MutMap(out.data(), n, m) = ConstMap(t.data().data(), m, n).transpose();
  return make_result("transpose", {n, m}, std::move(out), {t}, [m, n](Node &self) {
    Node &in = parent(self, 0);
    if (!in.requires_grad) {
      return;
    }
    MutMap(in.grad_buffer().data(), m, n) += ConstMap(self.grad.data(), n, m).transpose();
  });
}

Tensor sigmoid(const Tensor &x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor &x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor &x) {
  constexpr double c = 0.7978845608028654; // sqrt(2/pi)
  constexpr double a = 0.044715;
  auto xv = x.data();
  Storage out(xv.size());
  // tanh dominates the cost; keep it for the backward pass.
  auto th = std::make_shared<std::vector<double>>(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    (*th)[i] = std::tanh(c * (v + a * v * v * v));
    out[i] = 0.5 * v * (1.0 + (*th)[i]);
  }
  return make_result("gelu", x.shape(), std::move(out), {x}, [th](Node &self) {
    Node &in = parent(self, 0);
    if (!in.requires_grad) {
      return;
    }
    auto g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in.value[i], t = (*th)[i];
      g[i] += self.grad[i] *
              (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * a * v * v));
    }
  });
}

Tensor silu(const Tensor &x) {
  return unary("silu", x, [](double v) { return v * stable_sigmoid(v); },
               [](double v, double) {
                 const double s = stable_sigmoid(v);
                 return s * (1.0 + v * (1.0 - s));
               });
}

Tensor softplus(const Tensor &x) {
  return unary("softplus", x,
               [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
               [](double v, double) { return stable_sigmoid(v); });
}

Tensor exp(const Tensor &x) {
  return unary("exp", x, [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor &x) {
  return unary("log", x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor sin(const Tensor &x) {
  return unary("sin", x, [](double v) { return std::sin(v); },
               [](double v, double) { return std::cos(v); });
}

Tensor cos(const Tensor &x) {
  return unary("cos", x, [](double v) { return std::cos(v); },
               [](double v, double) { return -std::sin(v); });
}

Tensor softmax(const Tensor &x, std::size_t axis) {
  const AxisView v = axis_view("softmax", x.shape(), axis);
  auto xv = x.data();
  Storage out(xv.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.extent * v.inner + in;
      double mx = -INFINITY;
      for (std::size_t e = 0; e < v.extent; ++e) {
        mx = std::max(mx, xv[base + e * v.inner]);
      }
      double z = 0.0;
      for (std::size_t e = 0; e < v.extent; ++e) {
        const double ev = std::exp(xv[base + e * v.inner] - mx);
        out[base + e * v.inner] = ev;
        z += ev;
      }
      for (std::size_t e = 0; e < v.extent; ++e) {
        out[base + e * v.inner] /= z;
      }
    }
  }
  return make_result("softmax", x.shape(), std::move(out), {x}, [v](Node &self) {
    Node &src = parent(self, 0);
    if (!src.requires_grad) {
      return;
    }
    auto g = src.grad_buffer();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.extent * v.inner + in;
        double dot = 0.0;
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t i = base + e * v.inner;
          dot += self.grad[i] * self.value[i];
        }
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t i = base + e * v.inner;
          g[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor rms_norm(const Tensor &x, const Tensor &gain, double eps) {
  if (x.rank() == 0 || gain.numel() != x.shape().back()) {
    shape_fail("rms_norm", x.shape(), gain.shape());
  }
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  auto xv = x.data();
  auto gv = gain.data();
  Storage out(xv.size());
  std::vector<double> inv_rms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ms = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      ms += xv[r * d + j] * xv[r * d + j];
    }
    inv_rms[r] = 1.0 / std::sqrt(ms / static_cast<double>(d) + eps);
    for (std::size_t j = 0; j < d; ++j) {
      out[r * d + j] = xv[r * d + j] * inv_rms[r] * gv[j];
    }
  }
  return make_result(
      "rms_norm", x.shape(), std::move(out), {x, gain},
      [d, rows, inv_rms = std::move(inv_rms)](Node &self) {
        Node &px = parent(self, 0);
        Node &pg = parent(self, 1);
        const auto &g = self.grad;
        if (px.requires_grad) {
          auto gx = px.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            const double ir = inv_rms[r];
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dot += g[r * d + j] * pg.value[j] * px.value[r * d + j];
            }
            const double coef = ir * ir * ir * dot / static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              gx[r * d + j] += ir * pg.value[j] * g[r * d + j] - coef * px.value[r * d + j];
            }
          }
        }
        if (pg.requires_grad) {
          auto gg = pg.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
              gg[j] += g[r * d + j] * px.value[r * d + j] * inv_rms[r];
            }
          }
        }
      });
}

Tensor clamp(const Tensor &x, double lo, double hi, ClampGrad policy) {
  if (!(lo < hi)) {
    throw ConfigError("clamp", "lower bound " + std::to_string(lo) +
                                   " must be below upper bound " + std::to_string(hi));
  }
  auto xv = x.data();
  Storage out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = std::clamp(xv[i], lo, hi);
  }
  return make_result("clamp", x.shape(), std::move(out), {x}, [lo, hi, policy](Node &self) {
    Node &in = parent(self, 0);
    if (!in.requires_grad) {
      return;
    }
    auto g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double up = self.grad[i];
      switch (policy) {
      case ClampGrad::ZeroOutside: {
        const double v = in.value[i];
        g[i] += (v < lo || v > hi) ? 0.0 : up;
        break;
      }
      case ClampGrad::PassThrough: g[i] += up; break;
      case ClampGrad::ClampGrad: g[i] += std::clamp(up, lo, hi); break;
      }
    }
  });
}

Tensor ste_threshold(const Tensor &x, double threshold) {
  return unary("ste_threshold", x,
               [threshold](double v) { return v < threshold ? 0.0 : v; },
               [](double, double) { return 1.0; });
}

Tensor causal_depthwise_conv1d(const Tensor &x, const Tensor &kernel, std::size_t lanes,
                               std::span<const double> left_context) {
  require_rank("causal_depthwise_conv1d", x, 2);
  require_rank("causal_depthwise_conv1d", kernel, 2);
  const std::size_t channels = x.dim(1);
  const std::size_t width = kernel.dim(1);
  if (kernel.dim(0) != channels || width == 0) {
    shape_fail("causal_depthwise_conv1d", x.shape(), kernel.shape());
  }
  if (lanes == 0 || x.dim(0) % lanes != 0) {
    throw ShapeError("causal_depthwise_conv1d: " + std::to_string(x.dim(0)) +
                     " rows do not split into " + std::to_string(lanes) + " lanes");
  }
  const std::size_t steps = x.dim(0) / lanes;
  const std::size_t pad = width - 1;
  std::vector<double> context;
  if (left_context.empty()) {
    context.assign(lanes * pad * channels, 0.0);
  } else if (left_context.size() == lanes * pad * channels) {
    context.assign(left_context.begin(), left_context.end());
  } else {
    throw ShapeError("causal_depthwise_conv1d: left context holds " +
                     std::to_string(left_context.size()) + " values, expected " +
                     std::to_string(lanes * pad * channels));
  }

  auto xv = x.data();
  auto kv = kernel.data();
  // Value at lane b, time s (s may be negative, then read from the context).
  auto source = [&](const Storage &xs, std::size_t b, long s, std::size_t c) {
    if (s >= 0) {
      return xs[(b * steps + static_cast<std::size_t>(s)) * channels + c];
    }
    return context[(b * pad + static_cast<std::size_t>(static_cast<long>(pad) + s)) *
                       channels + c];
  };
  Storage out(xv.size(), 0.0);
  const Storage &xs = x.node()->value;
  for (std::size_t b = 0; b < lanes; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      double *row = out.data() + (b * steps + t) * channels;
      for (std::size_t i = 0; i < width; ++i) {
        const long s = static_cast<long>(t) - static_cast<long>(pad) + static_cast<long>(i);
        for (std::size_t c = 0; c < channels; ++c) {
          row[c] += kv[c * width + i] * source(xs, b, s, c);
        }
      }
    }
  }
  return make_result(
      "causal_depthwise_conv1d", x.shape(), std::move(out), {x, kernel},
      [lanes, steps, channels, width, pad, context = std::move(context)](Node &self) {
        Node &px = parent(self, 0);
        Node &pk = parent(self, 1);
        const auto &g = self.grad;
        if (px.requires_grad) {
          auto gx = px.grad_buffer();
          for (std::size_t b = 0; b < lanes; ++b) {
            for (std::size_t t = 0; t < steps; ++t) {
              const double *grow = g.data() + (b * steps + t) * channels;
              for (std::size_t i = 0; i < width; ++i) {
                const long s =
                    static_cast<long>(t) - static_cast<long>(pad) + static_cast<long>(i);
                if (s < 0) {
                  continue;
                }
                double *dst = gx.data() + (b * steps + static_cast<std::size_t>(s)) * channels;
                for (std::size_t c = 0; c < channels; ++c) {
                  dst[c] += pk.value[c * width + i] * grow[c];
                }
              }
            }
          }
        }
        if (pk.requires_grad) {
          auto gk = pk.grad_buffer();
          for (std::size_t b = 0; b < lanes; ++b) {
            for (std::size_t t = 0; t < steps; ++t) {
              const double *grow = g.data() + (b * steps + t) * channels;
              for (std::size_t i = 0; i < width; ++i) {
                const long s =
                    static_cast<long>(t) - static_cast<long>(pad) + static_cast<long>(i);
                for (std::size_t c = 0; c < channels; ++c) {
                  const double src =
                      s >= 0
                          ? px.value[(b * steps + static_cast<std::size_t>(s)) * channels + c]
                          : context[(b * pad + static_cast<std::size_t>(
                                                   static_cast<long>(pad) + s)) *
                                        channels + c];
                  gk[c * width + i] += grow[c] * src;
                }
              }
            }
          }
        }
      });
}

Tensor depthwise_conv_same(const Tensor &x, const Tensor &kernel, std::size_t channels,
                           std::size_t length) {
  require_rank("depthwise_conv_same", x, 2);
  require_rank("depthwise_conv_same", kernel, 2);
  const std::size_t width = kernel.dim(1);
  if (x.dim(1) != channels * length || kernel.dim(0) != channels || width % 2 == 0) {
    shape_fail("depthwise_conv_same", x.shape(), kernel.shape());
  }
  const std::size_t rows = x.dim(0);
  const long half = static_cast<long>(width / 2);
  auto xv = x.data();
  auto kv = kernel.data();
  Storage out(xv.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double *src = xv.data() + r * channels * length + c * length;
      double *dst = out.data() + r * channels * length + c * length;
      for (std::size_t l = 0; l < length; ++l) {
        double acc = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
          const long p = static_cast<long>(l) - half + static_cast<long>(i);
          if (p >= 0 && p < static_cast<long>(length)) {
            acc += kv[c * width + i] * src[p];
          }
        }
        dst[l] = acc;
      }
    }
  }
  return make_result(
      "depthwise_conv_same", x.shape(), std::move(out), {x, kernel},
      [rows, channels, length, width, half](Node &self) {
        Node &px = parent(self, 0);
        Node &pk = parent(self, 1);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = r * channels * length + c * length;
            for (std::size_t l = 0; l < length; ++l) {
              const double g = self.grad[base + l];
              for (std::size_t i = 0; i < width; ++i) {
                const long p = static_cast<long>(l) - half + static_cast<long>(i);
                if (p < 0 || p >= static_cast<long>(length)) {
                  continue;
                }
                if (px.requires_grad) {
                  px.grad_buffer()[base + static_cast<std::size_t>(p)] +=
                      pk.value[c * width + i] * g;
                }
                if (pk.requires_grad) {
                  pk.grad_buffer()[c * width + i] +=
                      g * px.value[base + static_cast<std::size_t>(p)];
                }
              }
            }
          }
        }
      });
}

Tensor embedding_lookup(const Tensor &table, std::span<const std::int32_t> ids) {
  require_rank("embedding_lookup", table, 2);
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<std::int32_t> index(ids.begin(), ids.end());
  Storage out(index.size() * d);
  auto tv = table.data();
  for (std::size_t n = 0; n < index.size(); ++n) {
    if (index[n] < 0 || static_cast<std::size_t>(index[n]) >= vocab) {
      throw RangeError("embedding_lookup: id " + std::to_string(index[n]) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(tv.begin() + index[n] * static_cast<long>(d), d, out.begin() + n * d);
  }
  const std::size_t count = index.size();
  return make_result("embedding_lookup", {count, d}, std::move(out), {table},
                     [d, index = std::move(index)](Node &self) {
                       Node &pt = parent(self, 0);
                       if (!pt.requires_grad) {
                         return;
                       }
                       auto g = pt.grad_buffer();
                       for (std::size_t n = 0; n < index.size(); ++n) {
                         double *dst = g.data() + static_cast<std::size_t>(index[n]) * d;
                         for (std::size_t j = 0; j < d; ++j) {
                           dst[j] += self.grad[n * d + j];
                         }
                       }
                     });
}

Tensor cross_entropy(const Tensor &logits, std::span<const std::int32_t> targets,
                     std::span<const std::uint8_t> mask) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t n = logits.dim(0), v = logits.dim(1);
  if (targets.size() != n || (!mask.empty() && mask.size() != n)) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " with " +
                     std::to_string(targets.size()) + " targets and " +
                     std::to_string(mask.size()) + " mask entries");
  }
  auto lv = logits.data();
  auto probs = std::make_shared<std::vector<double>>(n * v);
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> counted(n, 1);
  if (!mask.empty()) {
    std::copy(mask.begin(), mask.end(), counted.begin());
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!counted[r]) {
      continue;
    }
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= v) {
      throw RangeError("cross_entropy: target " + std::to_string(tgt[r]) +
                       " outside vocabulary of " + std::to_string(v));
    }
    const double *row = lv.data() + r * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      z += std::exp(row[j] - mx);
    }
    for (std::size_t j = 0; j < v; ++j) {
      (*probs)[r * v + j] = std::exp(row[j] - mx) / z;
    }
    total += mx + std::log(z) - row[tgt[r]];
    ++count;
  }
  const double denom = count ? static_cast<double>(count) : 1.0;
  Storage out{total / denom};
  return make_result("cross_entropy", {1}, std::move(out), {logits},
                     [n, v, denom, probs, tgt = std::move(tgt),
                      counted = std::move(counted)](Node &self) {
                       Node &pl = parent(self, 0);
                       if (!pl.requires_grad) {
                         return;
                       }
                       auto g = pl.grad_buffer();
                       const double up = self.grad[0] / denom;
                       for (std::size_t r = 0; r < n; ++r) {
                         if (!counted[r]) {
                           continue;
                         }
                         for (std::size_t j = 0; j < v; ++j) {
                           g[r * v + j] += up * (*probs)[r * v + j];
                         }
                         g[r * v + static_cast<std::size_t>(tgt[r])] -= up;
                       }
                     });
}

Tensor sum(const Tensor &x) {
  double total = 0.0;
  for (double v : x.data()) {
    total += v;
  }
  return make_result("sum", {1}, Storage{total}, {x}, [](Node &self) {
    Node &in = parent(self, 0);
    if (!in.requires_grad) {
      return;
    }
    for (auto &g : in.grad_buffer()) {
      g += self.grad[0];
    }
  });
}

Tensor mean(const Tensor &x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor weighted_sum(const Tensor &x, std::span<const double> weights) {
  if (weights.size() != x.numel()) {
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) +
                     " weights for shape " + shape_str(x.shape()));
  }
  double total = 0.0;
  auto xv = x.data();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    total += xv[i] * weights[i];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return make_result("weighted_sum", {1}, Storage{total}, {x}, [w = std::move(w)](Node &self) {
    Node &in = parent(self, 0);
    if (!in.requires_grad) {
      return;
    }
    auto g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[0] * w[i];
    }
  });
}

} // namespace cawn
