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

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "s2i/common.hpp"

namespace s2i {

// Dense row-major tensor, rank 0..3. Rank 0 is a scalar with one element.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(count(shape)), T(0));
  }
  Tensor(std::vector<int> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
    if (v.size() != static_cast<size_t>(count(shape)))
      throw ValidationError("tensor: data size does not match shape");
  }

  static long count(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) {
      if (d <= 0) throw ValidationError("tensor: nonpositive dimension");
      n *= d;
    }
    return n;
  }

  static Tensor scalar(T x) {
    Tensor t;
    t.v.assign(1, x);
    return t;
  }

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  long size() const { return static_cast<long>(v.size()); }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& at(int i) { return v[static_cast<size_t>(i)]; }
  const T& at(int i) const { return v[static_cast<size_t>(i)]; }
  T& at(int i, int j) { return v[static_cast<size_t>(i) * shape[1] + j]; }
  const T& at(int i, int j) const { return v[static_cast<size_t>(i) * shape[1] + j]; }
  T& at(int i, int j, int k) {
    return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  const T& at(int i, int j, int k) const {
    return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  bool all_finite() const {
    for (const T& x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
  for (auto& x : t.v) x = static_cast<T>(rng.uniform(lo, hi));
}

// All trainable tensors, keyed by a unique name. std::map keeps iteration
// (and thus serialization) order independent of registration order.
template <typename T>
class ParamSet {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    auto [it, inserted] = params_.emplace(name, std::move(t));
    if (!inserted) throw ValidationError("paramset: duplicate parameter name: " + name);
    return it->second;
  }

  Tensor<T>& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValidationError("paramset: unknown parameter: " + name);
    return it->second;
  }
  const Tensor<T>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValidationError("paramset: unknown parameter: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return params_.count(name) != 0; }
  size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  long total_elements() const {
    long n = 0;
    for (const auto& [k, t] : params_) n += t.size();
    return n;
  }

 private:
  std::map<std::string, Tensor<T>> params_;
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                        static_cast<unsigned char>((x >> 8) & 0xff),
                        static_cast<unsigned char>((x >> 16) & 0xff),
                        static_cast<unsigned char>((x >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ValidationError("binary read: truncated u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float x) {
  std::uint32_t bits;
  std::memcpy(&bits, &x, 4);
  write_u32(os, bits);
}

inline float read_f32(std::istream& is) {
  const std::uint32_t bits = read_u32(is);
  float x;
  std::memcpy(&x, &bits, 4);
  return x;
}

}  // namespace detail

// ParamSet file format "S2I1": magic, u32 tensor count, then per tensor:
// u32 name length + UTF-8 name, u32 rank, u32 dims, float32 LE data.
template <typename T>
void save_params(const ParamSet<T>& ps, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open for write: " + path);
  os.write("S2I1", 4);
  detail::write_u32(os, static_cast<std::uint32_t>(ps.size()));
  for (const auto& [name, t] : ps) {
    detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
    for (const T& x : t.v) detail::write_f32(os, static_cast<float>(x));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

template <typename T>
ParamSet<T> load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "S2I1", 4) != 0)
    throw ValidationError("not an S2I1 parameter file: " + path);
  const std::uint32_t n = detail::read_u32(is);
  ParamSet<T> ps;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t name_len = detail::read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw ValidationError("truncated tensor name in " + path);
    const std::uint32_t rank = detail::read_u32(is);
    if (rank > 3) throw ValidationError("tensor rank out of range in " + path);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(detail::read_u32(is));
    Tensor<T> t(shape.empty() ? std::vector<int>{} : shape);
    if (rank == 0) t = Tensor<T>::scalar(T(0));
    for (auto& x : t.v) x = static_cast<T>(detail::read_f32(is));
    if (!is) throw ValidationError("truncated tensor data in " + path);
    ps.add(name, std::move(t));
  }
  return ps;
}

}  // namespace s2i
