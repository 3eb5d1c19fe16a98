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

#include <catch2/catch_amalgamated.hpp>

#include "s2i/gradcheck.hpp"
#include "s2i/gru.hpp"

using namespace s2i;
using Catch::Approx;

namespace {

struct GruTensors {
  Tensor<double> wx, wh_zr, wh_h, b;
};

GruTensors random_gru(int d_in, int u, Rng& rng) {
  GruTensors t{Tensor<double>({3 * u, d_in}), Tensor<double>({2 * u, u}),
               Tensor<double>({u, u}), Tensor<double>({3 * u})};
  fill_uniform(t.wx, rng, -0.8, 0.8);
  fill_uniform(t.wh_zr, rng, -0.8, 0.8);
  fill_uniform(t.wh_h, rng, -0.8, 0.8);
  fill_uniform(t.b, rng, -0.3, 0.3);
  return t;
}

Tensor<double> run_gru(const Tensor<double>& x, const GruTensors& p, const Tensor<double>& mask,
                       bool reverse) {
  Graph<double> g;
  GruParamNodes<double> nodes{g.input(p.wx), g.input(p.wh_zr), g.input(p.wh_h), g.input(p.b)};
  return g.val(gru_layer(g, g.input(x), nodes, mask, reverse));
}

Tensor<double> full_mask(int b, int t) {
  Tensor<double> m({b, t});
  m.fill(1.0);
  return m;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// step-by-step scalar recurrence: 1 input dim, 1 unit
std::vector<double> scalar_gru_oracle(const std::vector<double>& xs, const GruTensors& p) {
  const double wz = p.wx.at(0, 0), wr = p.wx.at(1, 0), wh = p.wx.at(2, 0);
  const double uz = p.wh_zr.at(0, 0), ur = p.wh_zr.at(1, 0), uh = p.wh_h.at(0, 0);
  const double bz = p.b.at(0), br = p.b.at(1), bh = p.b.at(2);
  double h = 0;
  std::vector<double> out;
  for (double x : xs) {
    const double z = sigm(wz * x + uz * h + bz);
    const double r = sigm(wr * x + ur * h + br);
    const double cand = std::tanh(wh * x + uh * (r * h) + bh);
    h = (1 - z) * h + z * cand;
    out.push_back(h);
  }
  return out;
}

}  // namespace

TEST_CASE("gru: all-zero parameters give all-zero states") {
  Rng rng(3);
  Tensor<double> x({2, 5, 3});
  fill_uniform(x, rng, -1.0, 1.0);
  GruTensors p{Tensor<double>({6, 3}), Tensor<double>({4, 2}), Tensor<double>({2, 2}),
               Tensor<double>({6})};
  const auto h = run_gru(x, p, full_mask(2, 5), false);
  for (double v : h.v) REQUIRE(v == 0.0);
}

TEST_CASE("gru: sequence of length 1 gives identical fwd and bwd outputs") {
  Rng rng(7);
  Tensor<double> x({1, 1, 4});
  fill_uniform(x, rng, -1.0, 1.0);
  const auto p = random_gru(4, 3, rng);
  const auto f = run_gru(x, p, full_mask(1, 1), false);
  const auto b = run_gru(x, p, full_mask(1, 1), true);
  REQUIRE(f.v == b.v);
}

TEST_CASE("gru: matches the scalar recurrence oracle") {
  Rng rng(13);
  const auto p = random_gru(1, 1, rng);
  std::vector<double> xs = {0.4, -1.2, 0.9, 0.05};
  Tensor<double> x({1, 4, 1}, std::vector<double>(xs));
  const auto h = run_gru(x, p, full_mask(1, 4), false);
  const auto want = scalar_gru_oracle(xs, p);
  for (int t = 0; t < 4; ++t) REQUIRE(h.at(0, t, 0) == Approx(want[static_cast<size_t>(t)]));
}

TEST_CASE("gru: bwd on a sequence equals fwd on the reversed sequence, time-reversed") {
  Rng rng(17);
  const int T = 6, D = 3, U = 4;
  const auto p = random_gru(D, U, rng);
  Tensor<double> x({1, T, D});
  fill_uniform(x, rng, -1.0, 1.0);
  Tensor<double> xr({1, T, D});
  for (int t = 0; t < T; ++t)
    for (int d = 0; d < D; ++d) xr.at(0, t, d) = x.at(0, T - 1 - t, d);
  const auto hb = run_gru(x, p, full_mask(1, T), true);
  const auto hf = run_gru(xr, p, full_mask(1, T), false);
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < U; ++u)
      REQUIRE(hb.at(0, t, u) == Approx(hf.at(0, T - 1 - t, u)).margin(1e-12));
}

TEST_CASE("gru: padded steps do not leak into valid ones") {
  Rng rng(19);
  const int D = 2, U = 3;
  const auto p = random_gru(D, U, rng);
  // item alone
  Tensor<double> alone({1, 4, D});
  fill_uniform(alone, rng, -1.0, 1.0);
  // same item padded to 7 frames with trailing garbage
  Tensor<double> padded({1, 7, D});
  for (int t = 0; t < 4; ++t)
    for (int d = 0; d < D; ++d) padded.at(0, t, d) = alone.at(0, t, d);
  for (int t = 4; t < 7; ++t)
    for (int d = 0; d < D; ++d) padded.at(0, t, d) = 99.0;
  Tensor<double> mask({1, 7});
  for (int t = 0; t < 4; ++t) mask.at(0, t) = 1.0;

  for (bool rev : {false, true}) {
    const auto ha = run_gru(alone, p, full_mask(1, 4), rev);
    const auto hp = run_gru(padded, p, mask, rev);
    for (int t = 0; t < 4; ++t)
      for (int u = 0; u < U; ++u)
        REQUIRE(hp.at(0, t, u) == Approx(ha.at(0, t, u)).margin(1e-12));
  }
}

TEST_CASE("gru: empty sequence is an error") {
  Graph<double> g;
  Rng rng(23);
  const auto p = random_gru(2, 2, rng);
  GruParamNodes<double> nodes{g.input(p.wx), g.input(p.wh_zr), g.input(p.wh_h), g.input(p.b)};
  REQUIRE_THROWS_AS(gru_layer(g, g.input(Tensor<double>({1, 2})), nodes,
                              full_mask(1, 2), false),
                    ValidationError);
}

TEST_CASE("gru: gradients pass finite differences through time") {
  Rng rng(29);
  const int T = 4, D = 2, U = 2, B = 2;
  const auto p = random_gru(D, U, rng);
  Tensor<double> x({B, T, D});
  fill_uniform(x, rng, -1.0, 1.0);
  Tensor<double> mask = full_mask(B, T);
  mask.at(1, 3) = 0.0;
  Tensor<double> probe_w({B, T, U});
  fill_uniform(probe_w, rng, -1.0, 1.0);
  for (bool rev : {false, true}) {
    auto report = grad_check(
        {x, p.wx, p.wh_zr, p.wh_h, p.b},
        [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
          GruParamNodes<double> nodes{ids[1], ids[2], ids[3], ids[4]};
          auto h = gru_layer(g, ids[0], nodes, mask, rev);
          return ops::weighted_sum_all(g, h, probe_w);
        });
    INFO((rev ? "bwd " : "fwd ") << report.worst_location << " err " << report.max_rel_err);
    REQUIRE(report.pass(1e-4));
  }
}
