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

#include "cawn/phase_accumulator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "cawn/ops.hpp"

namespace cawn {

namespace {

void put_u32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
}

std::uint32_t get_u32(std::span<const char> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

void put_f32(std::string &out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

} // namespace

PhaseState PhaseState::zero(WaveShape shape) {
  PhaseState s;
  s.heads = static_cast<std::uint32_t>(shape.heads);
  s.harmonics = static_cast<std::uint32_t>(shape.harmonics);
  s.real.assign(shape.channels(), 0.0);
  s.imag.assign(shape.channels(), 0.0);
  return s;
}

std::size_t PhaseState::serialized_size(WaveShape shape) {
  return 8 + 2 * 4 * shape.channels();
}

std::string PhaseState::serialize() const {
  std::string out;
  out.reserve(8 + 8 * real.size());
  put_u32(out, heads);
  put_u32(out, harmonics);
  for (double v : real) {
    put_f32(out, v);
  }
  for (double v : imag) {
    put_f32(out, v);
  }
  return out;
}

PhaseState PhaseState::deserialize(std::span<const char> bytes) {
  if (bytes.size() < 8) {
    throw IoError("phase state: truncated header");
  }
  PhaseState s;
  s.heads = get_u32(bytes, 0);
  s.harmonics = get_u32(bytes, 4);
  const std::size_t j = static_cast<std::size_t>(s.heads) * s.harmonics;
  if (bytes.size() != 8 + 8 * j) {
    throw IoError("phase state: expected " + std::to_string(8 + 8 * j) + " bytes, got " +
                  std::to_string(bytes.size()));
  }
  s.real.resize(j);
  s.imag.resize(j);
  for (std::size_t i = 0; i < j; ++i) {
    s.real[i] = std::bit_cast<float>(get_u32(bytes, 8 + 4 * i));
    s.imag[i] = std::bit_cast<float>(get_u32(bytes, 8 + 4 * (j + i)));
  }
  return s;
}

std::vector<double> rotation_schedule(std::size_t channels) {
  std::vector<double> theta(channels);
  for (std::size_t j = 0; j < channels; ++j) {
    theta[j] = std::pow(10000.0, -2.0 * static_cast<double>(j) / static_cast<double>(channels));
  }
  return theta;
}

PushPair build_push(const WaveParams &params, WaveShape shape) {
  const Tensor gated = mul(params.amplitude, matmul(params.valve, head_expansion(shape)));
  return {mul(gated, cos(params.phase)), mul(gated, sin(params.phase))};
}

Tensor synthesize(const Tensor &real, const Tensor &imag) { return concat({real, imag}, 1); }

void scan::forward(std::span<const double> push_real, std::span<const double> push_imag,
                   std::span<const double> retention, std::span<const double> theta,
                   std::span<const double> init_real, std::span<const double> init_imag,
                   double bound, std::span<double> out_real, std::span<double> out_imag,
                   bool f32_storage) {
  const std::size_t j_count = theta.size();
  const std::size_t steps = push_real.size() / j_count;
  std::vector<double> cs(j_count), sn(j_count);
  for (std::size_t j = 0; j < j_count; ++j) {
    cs[j] = std::cos(theta[j]);
    sn[j] = std::sin(theta[j]);
  }
  const double *prev_r = init_real.data();
  const double *prev_i = init_imag.data();
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t row = t * j_count;
    for (std::size_t j = 0; j < j_count; ++j) {
      const double g = retention[row + j];
      const double r = push_real[row + j] + g * (prev_r[j] * cs[j] - prev_i[j] * sn[j]);
      const double i = push_imag[row + j] + g * (prev_r[j] * sn[j] + prev_i[j] * cs[j]);
      out_real[row + j] = std::clamp(r, -bound, bound);
      out_imag[row + j] = std::clamp(i, -bound, bound);
      if (f32_storage) {
        out_real[row + j] = static_cast<float>(out_real[row + j]);
        out_imag[row + j] = static_cast<float>(out_imag[row + j]);
      }
    }
    prev_r = out_real.data() + row;
    prev_i = out_imag.data() + row;
  }
}

scan::Gradients scan::backward(std::span<const double> saved_real,
                               std::span<const double> saved_imag,
                               std::span<const double> retention,
                               std::span<const double> theta,
                               std::span<const double> init_real,
                               std::span<const double> init_imag,
                               std::span<const double> grad_real,
                               std::span<const double> grad_imag, double grad_bound) {
  const std::size_t j_count = theta.size();
  const std::size_t steps = j_count ? saved_real.size() / j_count : 0;
  if (saved_real.size() != steps * j_count || saved_imag.size() != saved_real.size() ||
      retention.size() != saved_real.size() || grad_real.size() != saved_real.size() ||
      grad_imag.size() != saved_real.size() || init_real.size() != j_count ||
      init_imag.size() != j_count) {
    throw InternalError("scan backward: saved forward rows missing or mismatched");
  }
  Gradients out;
  out.push_real.assign(saved_real.size(), 0.0);
  out.push_imag.assign(saved_real.size(), 0.0);
  out.retention.assign(saved_real.size(), 0.0);
  out.init_real.assign(j_count, 0.0);
  out.init_imag.assign(j_count, 0.0);

  std::vector<double> cs(j_count), sn(j_count);
  for (std::size_t j = 0; j < j_count; ++j) {
    cs[j] = std::cos(theta[j]);
    sn[j] = std::sin(theta[j]);
  }
  // carry_* = dL/dP[t] flowing back from step t + 1.
  std::vector<double> carry_r(j_count, 0.0), carry_i(j_count, 0.0);
  for (std::size_t tt = steps; tt-- > 0;) {
    const std::size_t row = tt * j_count;
    const double *prev_r = tt ? saved_real.data() + row - j_count : init_real.data();
    const double *prev_i = tt ? saved_imag.data() + row - j_count : init_imag.data();
    for (std::size_t j = 0; j < j_count; ++j) {
      // Clamp backward is the identity.
      const double gr = grad_real[row + j] + carry_r[j];
      const double gi = grad_imag[row + j] + carry_i[j];
      const double rot_r = prev_r[j] * cs[j] - prev_i[j] * sn[j];
      const double rot_i = prev_r[j] * sn[j] + prev_i[j] * cs[j];
      const double g = retention[row + j];
      out.push_real[row + j] = std::clamp(gr, -grad_bound, grad_bound);
      out.push_imag[row + j] = std::clamp(gi, -grad_bound, grad_bound);
      out.retention[row + j] = std::clamp(gr * rot_r + gi * rot_i, -grad_bound, grad_bound);
      // Transposed rotation scaled by the retention.
      carry_r[j] = g * (gr * cs[j] + gi * sn[j]);
      carry_i[j] = g * (-gr * sn[j] + gi * cs[j]);
    }
  }
  out.init_real = carry_r;
  out.init_imag = carry_i;
  return out;
}

ScanOutput scan_forward(const Tensor &push_real, const Tensor &push_imag,
                        const Tensor &retention, std::span<const double> theta,
                        std::size_t lanes, std::span<const PhaseState> init,
                        WaveShape shape, const ScanOptions &opts) {
  const std::size_t j_count = theta.size();
  if (push_real.rank() != 2 || push_real.dim(1) != j_count ||
      push_imag.shape() != push_real.shape() || retention.shape() != push_real.shape()) {
    throw ShapeError("scan_forward: push " + shape_str(push_real.shape()) + ", " +
                     shape_str(push_imag.shape()) + ", retention " +
                     shape_str(retention.shape()) + " with " + std::to_string(j_count) +
                     " rotation channels");
  }
  if (lanes == 0 || push_real.dim(0) % lanes != 0) {
    throw ShapeError("scan_forward: " + std::to_string(push_real.dim(0)) +
                     " rows do not split into " + std::to_string(lanes) + " lanes");
  }
  if (!init.empty() && init.size() != lanes) {
    throw ShapeError("scan_forward: " + std::to_string(init.size()) +
                     " initial states for " + std::to_string(lanes) + " lanes");
  }
  const std::size_t steps = push_real.dim(0) / lanes;
  const std::size_t lane_size = steps * j_count;

  std::vector<PhaseState> starts;
  starts.reserve(lanes);
  for (std::size_t b = 0; b < lanes; ++b) {
    starts.push_back(init.empty() ? PhaseState::zero(shape) : init[b]);
    if (starts.back().channels() != j_count) {
      throw ShapeError("scan_forward: initial state has " +
                       std::to_string(starts.back().channels()) + " channels, expected " +
                       std::to_string(j_count));
    }
  }

  // Packed output: per row, J real values then J imaginary values.
  Storage packed(push_real.dim(0) * 2 * j_count);
  std::vector<double> out_r(lane_size), out_i(lane_size);
  ScanOutput result;
  auto pr = push_real.data();
  auto pi = push_imag.data();
  auto gm = retention.data();
  const bool f32 = push_real.dtype() == Dtype::F32 || push_imag.dtype() == Dtype::F32 ||
                   retention.dtype() == Dtype::F32;
  for (std::size_t b = 0; b < lanes; ++b) {
    const std::size_t off = b * lane_size;
    scan::forward(pr.subspan(off, lane_size), pi.subspan(off, lane_size),
                  gm.subspan(off, lane_size), theta, starts[b].real, starts[b].imag,
                  opts.state_bound, out_r, out_i, f32);
    for (std::size_t t = 0; t < steps; ++t) {
      double *dst = packed.data() + (b * steps + t) * 2 * j_count;
      std::copy_n(out_r.begin() + t * j_count, j_count, dst);
      std::copy_n(out_i.begin() + t * j_count, j_count, dst + j_count);
    }
    PhaseState fin = PhaseState::zero(shape);
    if (steps > 0) {
      std::copy_n(out_r.end() - j_count, j_count, fin.real.begin());
      std::copy_n(out_i.end() - j_count, j_count, fin.imag.begin());
    } else {
      fin = starts[b];
    }
    result.final_states.push_back(std::move(fin));
  }

  std::vector<double> theta_copy(theta.begin(), theta.end());
  const double grad_bound = opts.grad_bound;
  Tensor packed_t = detail::make_result(
      "phase_scan", {push_real.dim(0), 2 * j_count}, std::move(packed),
      {push_real, push_imag, retention},
      [lanes, steps, j_count, grad_bound, theta = std::move(theta_copy),
       starts = std::move(starts)](detail::Node &self) {
        const std::size_t lane_size = steps * j_count;
        std::vector<double> sr(lane_size), si(lane_size), gr(lane_size), gi(lane_size);
        detail::Node &p_r = *self.parents[0];
        detail::Node &p_i = *self.parents[1];
        detail::Node &p_g = *self.parents[2];
        for (std::size_t b = 0; b < lanes; ++b) {
          for (std::size_t t = 0; t < steps; ++t) {
            const std::size_t src = (b * steps + t) * 2 * j_count;
            std::copy_n(self.value.begin() + src, j_count, sr.begin() + t * j_count);
            std::copy_n(self.value.begin() + src + j_count, j_count, si.begin() + t * j_count);
            std::copy_n(self.grad.begin() + src, j_count, gr.begin() + t * j_count);
            std::copy_n(self.grad.begin() + src + j_count, j_count, gi.begin() + t * j_count);
          }
          const std::size_t off = b * lane_size;
          auto grads = scan::backward(
              sr, si, std::span<const double>(p_g.value).subspan(off, lane_size), theta,
              starts[b].real, starts[b].imag, gr, gi, grad_bound);
          auto accumulate = [&](detail::Node &node, const std::vector<double> &g) {
            if (!node.requires_grad) {
              return;
            }
            auto dst = node.grad_buffer();
            for (std::size_t i = 0; i < lane_size; ++i) {
              dst[off + i] += g[i];
            }
          };
          accumulate(p_r, grads.push_real);
          accumulate(p_i, grads.push_imag);
          accumulate(p_g, grads.retention);
        }
      });
  auto halves = split(packed_t, {j_count, j_count}, 1);
  result.real = halves[0];
  result.imag = halves[1];
  return result;
}

} // namespace cawn
