// Copyright 2026 The s2i Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "s2i/graph.hpp"

namespace s2i {

// One direction of a GRU layer. Weights are fused over the three gates in
// the row order [update z | reset r | candidate h]:
//   wx    [3u, d_in]   input projections
//   wh_zr [2u, u]      recurrent projections of z and r
//   wh_h  [u, u]       recurrent projection of the candidate (applied to r*h)
//   b     [3u]         gate biases
template <typename T>
struct GruParamNodes {
  typename Graph<T>::Id wx, wh_zr, wh_h, b;
};

// Runs the recurrence
//   z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
//   r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//   c_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
//   h_t = (1 - z_t) * h_{t-1} + z_t * c_t
// over x [B,T,d_in] with a [B,T] validity mask. Invalid steps keep the
// previous state, so the backward direction effectively starts at each
// item's last valid frame from a zero state. Output states are stored at
// their original time indices for both directions.
template <typename T>
typename Graph<T>::Id gru_layer(Graph<T>& g, typename Graph<T>::Id x,
                                const GruParamNodes<T>& p, const Tensor<T>& mask,
                                bool reverse_time) {
  using Id = typename Graph<T>::Id;
  const Tensor<T>& X = g.val(x);
  if (X.rank() != 3) throw ValidationError("gru_layer: want [B,T,D] input");
  const int B = X.dim(0), Tn = X.dim(1), Din = X.dim(2);
  if (Tn < 1) throw ValidationError("gru_layer: empty sequence");
  const int u = g.val(p.wh_h).dim(0);
  if (g.val(p.wx).dim(0) != 3 * u || g.val(p.wx).dim(1) != Din ||
      g.val(p.wh_zr).dim(0) != 2 * u || g.val(p.wh_zr).dim(1) != u ||
      g.val(p.b).dim(0) != 3 * u)
    throw ValidationError("gru_layer: parameter shape mismatch");
  if (mask.rank() != 2 || mask.dim(0) != B || mask.dim(1) != Tn)
    throw ValidationError("gru_layer: mask shape mismatch");

  // Input-side projections for all timesteps in one matmul.
  Id flat = ops::reshape(g, x, {B * Tn, Din});
  Id proj = ops::add_bias(g, ops::matmul_nt(g, flat, p.wx), p.b);
  Id proj3 = ops::reshape(g, proj, {B, Tn, 3 * u});

  Id h = g.input(Tensor<T>({B, u}), false);
  std::vector<Id> steps(static_cast<size_t>(Tn));
  for (int i = 0; i < Tn; ++i) {
    const int t = reverse_time ? Tn - 1 - i : i;
    Id at = ops::time_slice(g, proj3, t);
    Id az = ops::slice_cols(g, at, 0, u);
    Id ar = ops::slice_cols(g, at, u, 2 * u);
    Id ah = ops::slice_cols(g, at, 2 * u, 3 * u);
    Id uzr = ops::matmul_nt(g, h, p.wh_zr);
    Id z = ops::sigmoid(g, ops::add(g, az, ops::slice_cols(g, uzr, 0, u)));
    Id r = ops::sigmoid(g, ops::add(g, ar, ops::slice_cols(g, uzr, u, 2 * u)));
    Id cand = ops::tanh_op(
        g, ops::add(g, ah, ops::matmul_nt(g, ops::mul(g, r, h), p.wh_h)));
    Id h_new = ops::lerp(g, z, h, cand);
    std::vector<T> keep(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) keep[static_cast<size_t>(b)] = mask.at(b, t);
    h = ops::mask_rows(g, keep, h_new, h);
    steps[static_cast<size_t>(t)] = h;
  }
  return ops::stack_time(g, steps);
}

}  // namespace s2i
