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

#include <cstdio>
#include <filesystem>

#include "s2i/tensor.hpp"

using namespace s2i;

namespace {
std::string temp_file(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}
}  // namespace

TEST_CASE("tensor shape and indexing") {
  Tensor<float> t({2, 3});
  REQUIRE(t.size() == 6);
  t.at(1, 2) = 5.0f;
  REQUIRE(t.v[5] == 5.0f);
  REQUIRE_THROWS_AS(Tensor<float>({0, 3}), ValidationError);

  Tensor<float> s = Tensor<float>::scalar(2.5f);
  REQUIRE(s.rank() == 0);
  REQUIRE(s.size() == 1);
}

TEST_CASE("paramset rejects duplicates and unknown names") {
  ParamSet<float> ps;
  ps.add("a", Tensor<float>({2}));
  REQUIRE_THROWS_AS(ps.add("a", Tensor<float>({2})), ValidationError);
  REQUIRE_THROWS_AS(ps.get("missing"), ValidationError);
}

TEST_CASE("paramset S2I1 roundtrip") {
  ParamSet<float> ps;
  Rng rng(3);
  Tensor<float> a({3, 4});
  fill_uniform(a, rng, -2.0, 2.0);
  Tensor<float> b({5});
  fill_uniform(b, rng, -1.0, 1.0);
  ps.add("enc.w", a);
  ps.add("enc.b", b);

  const std::string path = temp_file("s2i_params_test.s2i");
  save_params(ps, path);
  const auto loaded = load_params<float>(path);
  REQUIRE(loaded.size() == 2);
  REQUIRE(loaded.get("enc.w").shape == a.shape);
  REQUIRE(loaded.get("enc.w").v == a.v);
  REQUIRE(loaded.get("enc.b").v == b.v);
  std::filesystem::remove(path);
}

TEST_CASE("paramset load rejects wrong magic") {
  const std::string path = temp_file("s2i_bad_magic.s2i");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE1234";
  }
  REQUIRE_THROWS_AS(load_params<float>(path), ValidationError);
  std::filesystem::remove(path);
}

TEST_CASE("rng determinism and substreams") {
  Rng a(42), b(42);
  for (int i = 0; i < 16; ++i) REQUIRE(a.next_u64() == b.next_u64());
  Rng base(7);
  Rng s1 = base.derive(1), s2 = base.derive(2);
  REQUIRE(s1.next_u64() != s2.next_u64());
  // uniform stays in range, normal is finite
  Rng c(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(std::isfinite(c.normal()));
  }
}
