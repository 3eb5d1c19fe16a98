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
#include "s2i/graph.hpp"

using namespace s2i;
using Catch::Approx;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  fill_uniform(t, rng, lo, hi);
  return t;
}

}  // namespace

TEST_CASE("linear: identity weights reproduce the input") {
  Graph<double> g;
  Tensor<double> w({2, 2});
  w.at(0, 0) = 1;
  w.at(1, 1) = 1;
  auto x = g.input(Tensor<double>({1, 2}, {1.0, 2.0}));
  auto wid = g.input(w);
  auto b = g.input(Tensor<double>({2}));
  auto y = ops::add_bias(g, ops::matmul_nt(g, x, wid), b);
  REQUIRE(g.val(y).v == std::vector<double>{1.0, 2.0});
}

TEST_CASE("linear: hand arithmetic") {
  // x=[1,2], W=[[1,1],[0,1]], b=[0,1] -> y=[3,3]
  Graph<double> g;
  auto x = g.input(Tensor<double>({1, 2}, {1.0, 2.0}));
  auto w = g.input(Tensor<double>({2, 2}, {1.0, 1.0, 0.0, 1.0}));
  auto b = g.input(Tensor<double>({2}, {0.0, 1.0}));
  auto y = ops::add_bias(g, ops::matmul_nt(g, x, w), b);
  REQUIRE(g.val(y).at(0, 0) == Approx(3.0));
  REQUIRE(g.val(y).at(0, 1) == Approx(3.0));
}

TEST_CASE("linear: gradients match finite differences on random shapes") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = static_cast<int>(rng.uniform_int(1, 4));
    const int n_in = static_cast<int>(rng.uniform_int(3, 8));
    const int n_out = static_cast<int>(rng.uniform_int(3, 8));
    std::vector<Tensor<double>> inputs = {random_tensor({m, n_in}, rng),
                                          random_tensor({n_out, n_in}, rng),
                                          random_tensor({n_out}, rng)};
    Tensor<double> probe_w({m, n_out});
    fill_uniform(probe_w, rng, -1.0, 1.0);
    auto report = grad_check(
        inputs,
        [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
          auto y = ops::add_bias(g, ops::matmul_nt(g, ids[0], ids[1]), ids[2]);
          return ops::weighted_sum_all(g, y, probe_w);
        });
    INFO(report.worst_location);
    REQUIRE(report.pass(1e-4));
  }
}

TEST_CASE("matmul shape mismatch throws") {
  Graph<double> g;
  auto a = g.input(Tensor<double>({2, 3}));
  auto b = g.input(Tensor<double>({2, 3}));
  REQUIRE_THROWS_AS(ops::matmul(g, a, b), ValidationError);
}

TEST_CASE("conv1d: output length formula") {
  // t=196, k=6, s=2, p=2 -> 98
  Graph<double> g;
  auto x = g.input(Tensor<double>({1, 196, 1}));
  auto k = g.input(Tensor<double>({4, 1, 6}));
  auto y = ops::conv1d(g, x, k, 2, 2);
  REQUIRE(g.val(y).dim(1) == 98);
}

TEST_CASE("conv1d: identity kernel") {
  Rng rng(5);
  Graph<double> g;
  Tensor<double> x = random_tensor({1, 7, 1}, rng);
  auto xid = g.input(x);
  auto k = g.input(Tensor<double>({1, 1, 1}, {1.0}));
  auto y = ops::conv1d(g, xid, k, 1, 0);
  REQUIRE(g.val(y).v == x.v);
}

namespace {
// independent nested-loop convolution
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& k, int stride,
                           int pad) {
  const int B = x.dim(0), T = x.dim(1), Cin = x.dim(2);
  const int Cout = k.dim(0), K = k.dim(2);
  const int Tout = (T + 2 * pad - K) / stride + 1;
  Tensor<double> out({B, Tout, Cout});
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < Tout; ++t)
      for (int co = 0; co < Cout; ++co) {
        double acc = 0;
        for (int ci = 0; ci < Cin; ++ci)
          for (int kk = 0; kk < K; ++kk) {
            const int ti = t * stride + kk - pad;
            if (ti >= 0 && ti < T) acc += x.at(b, ti, ci) * k.at(co, ci, kk);
          }
        out.at(b, t, co) = acc;
      }
  return out;
}
}  // namespace

TEST_CASE("conv1d: equals the nested-loop oracle on small shapes") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int B = static_cast<int>(rng.uniform_int(1, 3));
    const int Cin = static_cast<int>(rng.uniform_int(1, 8));
    const int Cout = static_cast<int>(rng.uniform_int(1, 8));
    const int K = static_cast<int>(rng.uniform_int(1, 6));
    const int pad = static_cast<int>(rng.uniform_int(0, 2));
    const int stride = static_cast<int>(rng.uniform_int(1, 2));
    const int T = static_cast<int>(rng.uniform_int(std::max(1, K - 2 * pad), 8));
    Tensor<double> x = random_tensor({B, T, Cin}, rng);
    Tensor<double> k = random_tensor({Cout, Cin, K}, rng);
    Graph<double> g;
    auto y = ops::conv1d(g, g.input(x), g.input(k), stride, pad);
    const Tensor<double> want = conv_oracle(x, k, stride, pad);
    REQUIRE(g.val(y).shape == want.shape);
    for (size_t i = 0; i < want.v.size(); ++i)
      REQUIRE(g.val(y).v[i] == Approx(want.v[i]).margin(1e-12));
  }
}

TEST_CASE("conv1d: gradients pass finite differences") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> x = random_tensor({2, 6, 3}, rng);
    Tensor<double> k = random_tensor({4, 3, 3}, rng);
    Tensor<double> probe_w({2, 3, 4});  // Tout = (6+2-3)/2+1 = 3
    fill_uniform(probe_w, rng, -1.0, 1.0);
    auto report = grad_check({x, k},
                             [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
                               auto y = ops::conv1d(g, ids[0], ids[1], 2, 1);
                               return ops::weighted_sum_all(g, y, probe_w);
                             });
    INFO(report.worst_location);
    REQUIRE(report.pass(1e-4));
  }
}

TEST_CASE("softmax_over_time: single frame gives weight 1") {
  Graph<double> g;
  auto s = g.input(Tensor<double>({1, 1, 3}, {0.3, -2.0, 5.0}));
  Tensor<double> mask({1, 1}, {1.0});
  auto a = ops::softmax_over_time(g, s, mask);
  for (double v : g.val(a).v) REQUIRE(v == Approx(1.0));
}

TEST_CASE("softmax_over_time: constant scores give uniform weights") {
  Graph<double> g;
  Tensor<double> s({1, 4, 2});
  s.fill(0.7);
  Tensor<double> mask({1, 4});
  mask.fill(1.0);
  auto a = ops::softmax_over_time(g, g.input(s), mask);
  for (double v : g.val(a).v) REQUIRE(v == Approx(0.25));
}

TEST_CASE("softmax_over_time: hand-computed column") {
  // column [0.7616, 0.9951] -> [0.4419, 0.5581]
  Graph<double> g;
  auto s = g.input(Tensor<double>({1, 2, 1}, {0.7616, 0.9951}));
  Tensor<double> mask({1, 2});
  mask.fill(1.0);
  auto a = ops::softmax_over_time(g, s, mask);
  REQUIRE(g.val(a).at(0, 0, 0) == Approx(0.4419).margin(5e-5));
  REQUIRE(g.val(a).at(0, 1, 0) == Approx(0.5581).margin(5e-5));
}

TEST_CASE("softmax_over_time: masked frames are exactly zero, valid sum to one") {
  Rng rng(29);
  Tensor<double> s = random_tensor({2, 5, 3}, rng, -3.0, 3.0);
  Tensor<double> mask({2, 5});
  mask.at(0, 0) = mask.at(0, 1) = mask.at(0, 2) = 1.0;  // item 0: 3 valid
  mask.at(1, 0) = 1.0;                                   // item 1: 1 valid
  Graph<double> g;
  auto a = ops::softmax_over_time(g, g.input(s), mask);
  const auto& A = g.val(a);
  for (int d = 0; d < 3; ++d) {
    REQUIRE(A.at(0, 3, d) == 0.0);
    REQUIRE(A.at(0, 4, d) == 0.0);
    double sum0 = 0, sum1 = 0;
    for (int t = 0; t < 5; ++t) {
      sum0 += A.at(0, t, d);
      sum1 += A.at(1, t, d);
    }
    REQUIRE(std::abs(sum0 - 1.0) < 1e-6);
    REQUIRE(std::abs(sum1 - 1.0) < 1e-6);
  }
}

TEST_CASE("softmax_over_time: zero valid frames is an error") {
  Graph<double> g;
  auto s = g.input(Tensor<double>({1, 2, 1}));
  Tensor<double> mask({1, 2});
  REQUIRE_THROWS_AS(ops::softmax_over_time(g, s, mask), ValidationError);
}

TEST_CASE("softmax_over_time: gradients pass finite differences") {
  Rng rng(31);
  Tensor<double> s = random_tensor({2, 4, 3}, rng, -2.0, 2.0);
  Tensor<double> mask({2, 4});
  mask.fill(1.0);
  mask.at(1, 3) = 0.0;
  Tensor<double> probe_w({2, 4, 3});
  fill_uniform(probe_w, rng, -1.0, 1.0);
  auto report = grad_check({s},
                           [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
                             auto a = ops::softmax_over_time(g, ids[0], mask);
                             return ops::weighted_sum_all(g, a, probe_w);
                           });
  INFO(report.worst_location);
  REQUIRE(report.pass(1e-4));
}

TEST_CASE("l2_normalize: 3-4-5 triangle") {
  Graph<double> g;
  auto y = ops::l2_normalize_rows(g, g.input(Tensor<double>({2}, {3.0, 4.0})));
  REQUIRE(g.val(y).at(0) == Approx(0.6));
  REQUIRE(g.val(y).at(1) == Approx(0.8));
}

TEST_CASE("l2_normalize: idempotent and unit norm") {
  Rng rng(37);
  Tensor<double> x = random_tensor({3, 16}, rng);
  Graph<double> g;
  auto y = ops::l2_normalize_rows(g, g.input(x));
  auto z = ops::l2_normalize_rows(g, y);
  for (int i = 0; i < 3; ++i) {
    double norm = 0;
    for (int j = 0; j < 16; ++j) {
      norm += g.val(y).at(i, j) * g.val(y).at(i, j);
      REQUIRE(std::abs(g.val(z).at(i, j) - g.val(y).at(i, j)) < 1e-7);
    }
    REQUIRE(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
  }
}

TEST_CASE("l2_normalize: zero vector is an error") {
  Graph<double> g;
  REQUIRE_THROWS_AS(ops::l2_normalize_rows(g, g.input(Tensor<double>({4}))), ValidationError);
}

TEST_CASE("l2_normalize: gradients pass finite differences") {
  Rng rng(41);
  Tensor<double> x = random_tensor({2, 16}, rng, 0.5, 1.5);
  Tensor<double> probe_w({2, 16});
  fill_uniform(probe_w, rng, -1.0, 1.0);
  auto report = grad_check({x},
                           [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
                             auto y = ops::l2_normalize_rows(g, ids[0]);
                             return ops::weighted_sum_all(g, y, probe_w);
                           });
  REQUIRE(report.pass(1e-4));
}

TEST_CASE("cosine_sim: self similarity is exactly 1") {
  Rng rng(43);
  Tensor<double> x = random_tensor({8}, rng);
  Graph<double> g;
  auto c = ops::cosine_sim(g, g.input(x), g.input(x));
  REQUIRE(g.val(c).v[0] == 1.0);
}

TEST_CASE("cosine_sim: orthogonal axes give 0, scaling is exact") {
  Graph<double> g;
  auto e1 = g.input(Tensor<double>({2}, {1.0, 0.0}));
  auto e2 = g.input(Tensor<double>({2}, {0.0, 1.0}));
  REQUIRE(g.val(ops::cosine_sim(g, e1, e2)).v[0] == 0.0);

  Rng rng(47);
  Tensor<double> a = random_tensor({8}, rng);
  Tensor<double> b = random_tensor({8}, rng);
  Tensor<double> a2 = a;
  for (auto& v : a2.v) v *= 2.0;
  Graph<double> g2;
  const double cab = g2.val(ops::cosine_sim(g2, g2.input(a), g2.input(b))).v[0];
  const double c2ab = g2.val(ops::cosine_sim(g2, g2.input(a2), g2.input(b))).v[0];
  REQUIRE(cab == c2ab);
}

TEST_CASE("cosine_sim: zero vector is an error") {
  Graph<double> g;
  auto z = g.input(Tensor<double>({3}));
  auto x = g.input(Tensor<double>({3}, {1.0, 0.0, 0.0}));
  REQUIRE_THROWS_AS(ops::cosine_sim(g, z, x), ValidationError);
}

TEST_CASE("cosine_sim: gradients pass finite differences") {
  Rng rng(53);
  auto report = grad_check({random_tensor({6}, rng, 0.2, 1.0), random_tensor({6}, rng, 0.2, 1.0)},
                           [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
                             return ops::cosine_sim(g, ids[0], ids[1]);
                           });
  REQUIRE(report.pass(1e-4));
}

TEST_CASE("elementwise and structural ops pass finite differences") {
  Rng rng(59);
  Tensor<double> probe_w({3, 4});
  fill_uniform(probe_w, rng, -1.0, 1.0);
  SECTION("mul + tanh + sigmoid chain") {
    auto report = grad_check(
        {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
        [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
          auto y = ops::mul(g, ops::tanh_op(g, ids[0]), ops::sigmoid(g, ids[1]));
          return ops::weighted_sum_all(g, y, probe_w);
        });
    REQUIRE(report.pass(1e-4));
  }
  SECTION("lerp blend") {
    auto report = grad_check(
        {random_tensor({3, 4}, rng, 0.1, 0.9), random_tensor({3, 4}, rng),
         random_tensor({3, 4}, rng)},
        [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
          auto y = ops::lerp(g, ids[0], ids[1], ids[2]);
          return ops::weighted_sum_all(g, y, probe_w);
        });
    REQUIRE(report.pass(1e-4));
  }
  SECTION("slice + concat + time ops") {
    Tensor<double> probe_big({2, 3, 6});
    fill_uniform(probe_big, rng, -1.0, 1.0);
    auto report = grad_check(
        {random_tensor({2, 3, 4}, rng), random_tensor({2, 3, 2}, rng)},
        [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
          auto cat = ops::concat_feat(g, ids[0], ids[1]);
          return ops::weighted_sum_all(g, cat, probe_big);
        });
    REQUIRE(report.pass(1e-4));
  }
  SECTION("masked_time_mean") {
    Tensor<double> mask({2, 3});
    mask.fill(1.0);
    mask.at(1, 2) = 0.0;
    Tensor<double> probe_small({2, 4});
    fill_uniform(probe_small, rng, -1.0, 1.0);
    auto report = grad_check(
        {random_tensor({2, 3, 4}, rng)},
        [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
          auto y = ops::masked_time_mean(g, ids[0], mask);
          return ops::weighted_sum_all(g, y, probe_small);
        });
    REQUIRE(report.pass(1e-4));
  }
}

TEST_CASE("grad_check flags tanh derivative at zero as exact") {
  // tanh'(0) = 1, matched by the difference quotient
  auto report = grad_check({Tensor<double>::scalar(0.0)},
                           [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
                             return ops::tanh_op(g, ids[0]);
                           });
  REQUIRE(report.pass(1e-6));
}

TEST_CASE("grad_check reports non-finite forwards") {
  auto report = grad_check({Tensor<double>::scalar(2.0)},
                           [&](Graph<double>& g, const std::vector<Graph<double>::Id>& ids) {
                             Tensor<double> bad = Tensor<double>::scalar(
                                 std::numeric_limits<double>::quiet_NaN());
                             auto nan_node = g.input(bad);
                             return ops::mul(g, ids[0], nan_node);
                           });
  REQUIRE_FALSE(report.forward_finite);
  REQUIRE_FALSE(report.pass(1e-4));
}
