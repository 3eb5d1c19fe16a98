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

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "s2i/tensor.hpp"

namespace s2i {

// --- raw matmul kernels (accumulating) -------------------------------------

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void mm_nn_acc(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C) {
  const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
  for (int i = 0; i < m; ++i) {
    const T* a = A.data() + static_cast<size_t>(i) * k;
    T* c = C.data() + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const T al = a[l];
      const T* b = B.data() + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) c[j] += al * b[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void mm_nt_acc(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C) {
  const int m = A.dim(0), k = A.dim(1), n = B.dim(0);
  for (int i = 0; i < m; ++i) {
    const T* a = A.data() + static_cast<size_t>(i) * k;
    T* c = C.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* b = B.data() + static_cast<size_t>(j) * k;
      T acc = 0;
      for (int l = 0; l < k; ++l) acc += a[l] * b[l];
      c[j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void mm_tn_acc(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C) {
  const int k = A.dim(0), m = A.dim(1), n = B.dim(1);
  for (int l = 0; l < k; ++l) {
    const T* a = A.data() + static_cast<size_t>(l) * m;
    const T* b = B.data() + static_cast<size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      const T ai = a[i];
      T* c = C.data() + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) c[j] += ai * b[j];
    }
  }
}

// --- dynamic graph ----------------------------------------------------------

// Define-by-run graph of tensor ops. Each op evaluates eagerly when added and
// registers a closure that scatters its output gradient to its parents.
// Node ids index a growing vector, so reverse id order is a valid
// reverse-topological order for the backward pass.
template <typename T>
class Graph {
 public:
  using Id = int;
  // Called with the graph and the node's own id during backward.
  using BackFn = std::function<void(Graph&, Id)>;

  Id add(Tensor<T> value, bool needs_grad, BackFn back = nullptr) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), needs_grad, std::move(back)});
    return static_cast<Id>(nodes_.size() - 1);
  }

  Id input(Tensor<T> value, bool needs_grad = false) { return add(std::move(value), needs_grad); }

  const Tensor<T>& val(Id id) const { return nodes_[static_cast<size_t>(id)].value; }

  bool wants(Id id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  Tensor<T>& grad(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.v.empty()) {
      n.grad.shape = n.value.shape;
      n.grad.v.assign(n.value.v.size(), T(0));
    }
    return n.grad;
  }

  // Reverse pass from a scalar root. Gradients accumulate into every node
  // reachable from the root that has needs_grad set; read them with grad().
  void backward(Id root) {
    if (val(root).size() != 1) throw ValidationError("backward: root must be a scalar");
    grad(root).v[0] = T(1);
    for (Id i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.needs_grad && n.back && !n.grad.v.empty()) n.back(*this, i);
    }
  }

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad;
    BackFn back;
  };
  std::vector<Node> nodes_;
};

// --- ops ---------------------------------------------------------------------

namespace ops {

template <typename T>
using Id = typename Graph<T>::Id;

// y = A * B, shapes [m,k] x [k,n]
template <typename T>
Id<T> matmul(Graph<T>& g, Id<T> a, Id<T> b) {
  const Tensor<T>&A = g.val(a), &B = g.val(b);
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
    throw ValidationError("matmul: shape mismatch");
  Tensor<T> out({A.dim(0), B.dim(1)});
  mm_nn_acc(A, B, out);
  return g.add(std::move(out), g.wants(a) || g.wants(b), [a, b](Graph<T>& gr, Id<T> self) {
    const Tensor<T>& G = gr.grad(self);
    if (gr.wants(a)) mm_nt_acc(G, gr.val(b), gr.grad(a));
    if (gr.wants(b)) mm_tn_acc(gr.val(a), G, gr.grad(b));
  });
}

// y = A * B^T, shapes [m,k] x [n,k]
template <typename T>
Id<T> matmul_nt(Graph<T>& g, Id<T> a, Id<T> b) {
  const Tensor<T>&A = g.val(a), &B = g.val(b);
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(1))
    throw ValidationError("matmul_nt: shape mismatch");
  Tensor<T> out({A.dim(0), B.dim(0)});
  mm_nt_acc(A, B, out);
  return g.add(std::move(out), g.wants(a) || g.wants(b), [a, b](Graph<T>& gr, Id<T> self) {
    const Tensor<T>& G = gr.grad(self);
    if (gr.wants(a)) mm_nn_acc(G, gr.val(b), gr.grad(a));
    if (gr.wants(b)) mm_tn_acc(G, gr.val(a), gr.grad(b));
  });
}

template <typename T>
Id<T> add(Graph<T>& g, Id<T> a, Id<T> b) {
  const Tensor<T>&A = g.val(a), &B = g.val(b);
  if (!A.same_shape(B)) throw ValidationError("add: shape mismatch");
  Tensor<T> out = A;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += B.v[i];
  return g.add(std::move(out), g.wants(a) || g.wants(b), [a, b](Graph<T>& gr, Id<T> self) {
    const Tensor<T>& G = gr.grad(self);
    if (gr.wants(a)) {
      Tensor<T>& da = gr.grad(a);
      for (size_t i = 0; i < G.v.size(); ++i) da.v[i] += G.v[i];
    }
    if (gr.wants(b)) {
      Tensor<T>& db = gr.grad(b);
      for (size_t i = 0; i < G.v.size(); ++i) db.v[i] += G.v[i];
    }
  });
}

template <typename T>
Id<T> sub(Graph<T>& g, Id<T> a, Id<T> b) {
  const Tensor<T>&A = g.val(a), &B = g.val(b);
  if (!A.same_shape(B)) throw ValidationError("sub: shape mismatch");
  Tensor<T> out = A;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= B.v[i];
  return g.add(std::move(out), g.wants(a) || g.wants(b), [a, b](Graph<T>& gr, Id<T> self) {
    const Tensor<T>& G = gr.grad(self);
    if (gr.wants(a)) {
      Tensor<T>& da = gr.grad(a);
      for (size_t i = 0; i < G.v.size(); ++i) da.v[i] += G.v[i];
    }
    if (gr.wants(b)) {
      Tensor<T>& db = gr.grad(b);
      for (size_t i = 0; i < G.v.size(); ++i) db.v[i] -= G.v[i];
    }
  });
}

// Hadamard product
template <typename T>
Id<T> mul(Graph<T>& g, Id<T> a, Id<T> b) {
  const Tensor<T>&A = g.val(a), &B = g.val(b);
  if (!A.same_shape(B)) throw ValidationError("mul: shape mismatch");
  Tensor<T> out = A;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= B.v[i];
  return g.add(std::move(out), g.wants(a) || g.wants(b), [a, b](Graph<T>& gr, Id<T> self) {
    const Tensor<T>& G = gr.grad(self);
    if (gr.wants(a)) {
      Tensor<T>& da = gr.grad(a);
      const Tensor<T>& B2 = gr.val(b);
      for (size_t i = 0; i < G.v.size(); ++i) da.v[i] += G.v[i] * B2.v[i];
    }
    if (gr.wants(b)) {
      Tensor<T>& db = gr.grad(b);
      const Tensor<T>& A2 = gr.val(a);
      for (size_t i = 0; i < G.v.size(); ++i) db.v[i] += G.v[i] * A2.v[i];
    }
  });
}

template <typename T>
Id<T> scale(Graph<T>& g, Id<T> a, T c) {
  Tensor<T> out = g.val(a);
  for (auto& x : out.v) x *= c;
  return g.add(std::move(out), g.wants(a), [a, c](Graph<T>& gr, Id<T> self) {
    const Tensor<T>& G = gr.grad(self);
    if (gr.wants(a)) {
      Tensor<T>& da = gr.grad(a);
      for (size_t i = 0; i < G.v.size(); ++i) da.v[i] += c * G.v[i];
    }
  });
}

// X[m,n] + row vector b[n] broadcast over rows
template <typename T>
Id<T> add_bias(Graph<T>& g, Id<T> x, Id<T> b) {
  const Tensor<T>&X = g.val(x), &B = g.val(b);
  if (X.rank() != 2 || B.rank() != 1 || B.dim(0) != X.dim(1))
    throw ValidationError("add_bias: shape mismatch");
  Tensor<T> out = X;
  const int m = X.dim(0), n = X.dim(1);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) += B.at(j);
  return g.add(std::move(out), g.wants(x) || g.wants(b), [x, b](Graph<T>& gr, Id<T> self) {
    const Tensor<T>& G = gr.grad(self);
    const int m = G.dim(0), n = G.dim(1);
    if (gr.wants(x)) {
      Tensor<T>& dx = gr.grad(x);
      for (size_t i = 0; i < G.v.size(); ++i) dx.v[i] += G.v[i];
    }
    if (gr.wants(b)) {
      Tensor<T>& db = gr.grad(b);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) db.at(j) += G.at(i, j);
    }
  });
}

template <typename T>
Id<T> sigmoid(Graph<T>& g, Id<T> a) {
  Tensor<T> out = g.val(a);
  for (auto& x : out.v) x = T(1) / (T(1) + std::exp(-x));
  return g.add(std::move(out), g.wants(a), [a](Graph<T>& gr, Id<T> self) {
    if (!gr.wants(a)) return;
    const Tensor<T>&G = gr.grad(self), &Y = gr.val(self);
    Tensor<T>& da = gr.grad(a);
    for (size_t i = 0; i < G.v.size(); ++i) da.v[i] += G.v[i] * Y.v[i] * (T(1) - Y.v[i]);
  });
}

template <typename T>
Id<T> tanh_op(Graph<T>& g, Id<T> a) {
  Tensor<T> out = g.val(a);
  for (auto& x : out.v) x = std::tanh(x);
  return g.add(std::move(out), g.wants(a), [a](Graph<T>& gr, Id<T> self) {
    if (!gr.wants(a)) return;
    const Tensor<T>&G = gr.grad(self), &Y = gr.val(self);
    Tensor<T>& da = gr.grad(a);
    for (size_t i = 0; i < G.v.size(); ++i) da.v[i] += G.v[i] * (T(1) - Y.v[i] * Y.v[i]);
  });
}

// columns [c0, c1) of X[m,n]
template <typename T>
Id<T> slice_cols(Graph<T>& g, Id<T> x, int c0, int c1) {
  const Tensor<T>& X = g.val(x);
  if (X.rank() != 2 || c0 < 0 || c1 > X.dim(1) || c0 >= c1)
    throw ValidationError("slice_cols: bad range");
  const int m = X.dim(0), w = c1 - c0;
  Tensor<T> out({m, w});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = X.at(i, c0 + j);
  return g.add(std::move(out), g.wants(x), [x, c0, w](Graph<T>& gr, Id<T> self) {
    if (!gr.wants(x)) return;
    const Tensor<T>& G = gr.grad(self);
    Tensor<T>& dx = gr.grad(x);
    const int m = G.dim(0);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) dx.at(i, c0 + j) += G.at(i, j);
  });
}

template <typename T>
Id<T> reshape(Graph<T>& g, Id<T> x, std::vector<int> shape) {
  const Tensor<T>& X = g.val(x);
  Tensor<T> out(shape);
  if (out.size() != X.size()) throw ValidationError("reshape: element count mismatch");
  out.v = X.v;
  return g.add(std::move(out), g.wants(x), [x](Graph<T>& gr, Id<T> self) {
    if (!gr.wants(x)) return;
    const Tensor<T>& G = gr.grad(self);
    Tensor<T>& dx = gr.grad(x);
    for (size_t i = 0; i < G.v.size(); ++i) dx.v[i] += G.v[i];
  });
}

// X[B,T,D] -> [B,D] at time t
template <typename T>
Id<T> time_slice(Graph<T>& g, Id<T> x, int t) {
  const Tensor<T>& X = g.val(x);
  if (X.rank() != 3 || t < 0 || t >= X.dim(1)) throw ValidationError("time_slice: bad index");
  const int B = X.dim(0), D = X.dim(2);
  Tensor<T> out({B, D});
  for (int b = 0; b < B; ++b)
    for (int d = 0; d < D; ++d) out.at(b, d) = X.at(b, t, d);
  return g.add(std::move(out), g.wants(x), [x, t](Graph<T>& gr, Id<T> self) {
    if (!gr.wants(x)) return;
    const Tensor<T>& G = gr.grad(self);
    Tensor<T>& dx = gr.grad(x);
    const int B = G.dim(0), D = G.dim(1);
    for (int b = 0; b < B; ++b)
      for (int d = 0; d < D; ++d) dx.at(b, t, d) += G.at(b, d);
  });
}

// steps: T nodes of shape [B,D] -> [B,T,D]
template <typename T>
Id<T> stack_time(Graph<T>& g, const std::vector<Id<T>>& steps) {
  if (steps.empty()) throw ValidationError("stack_time: empty sequence");
  const Tensor<T>& S0 = g.val(steps[0]);
  const int B = S0.dim(0), D = S0.dim(1), Tn = static_cast<int>(steps.size());
  Tensor<T> out({B, Tn, D});
  bool ng = false;
  for (int t = 0; t < Tn; ++t) {
    const Tensor<T>& S = g.val(steps[static_cast<size_t>(t)]);
    if (S.rank() != 2 || S.dim(0) != B || S.dim(1) != D)
      throw ValidationError("stack_time: inconsistent step shapes");
    ng = ng || g.wants(steps[static_cast<size_t>(t)]);
    for (int b = 0; b < B; ++b)
      for (int d = 0; d < D; ++d) out.at(b, t, d) = S.at(b, d);
  }
  return g.add(std::move(out), ng, [steps](Graph<T>& gr, Id<T> self) {
    const Tensor<T>& G = gr.grad(self);
    const int B = G.dim(0), Tn = G.dim(1), D = G.dim(2);
    for (int t = 0; t < Tn; ++t) {
      const Id<T> s = steps[static_cast<size_t>(t)];
      if (!gr.wants(s)) continue;
      Tensor<T>& ds = gr.grad(s);
      for (int b = 0; b < B; ++b)
        for (int d = 0; d < D; ++d) ds.at(b, d) += G.at(b, t, d);
    }
  });
}

// concat along the last (feature) axis of [B,T,D1] and [B,T,D2]
template <typename T>
Id<T> concat_feat(Graph<T>& g, Id<T> a, Id<T> b) {
  const Tensor<T>&A = g.val(a), &B = g.val(b);
  if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0) || A.dim(1) != B.dim(1))
    throw ValidationError("concat_feat: shape mismatch");
  const int Bn = A.dim(0), Tn = A.dim(1), D1 = A.dim(2), D2 = B.dim(2);
  Tensor<T> out({Bn, Tn, D1 + D2});
  for (int i = 0; i < Bn; ++i)
    for (int t = 0; t < Tn; ++t) {
      for (int d = 0; d < D1; ++d) out.at(i, t, d) = A.at(i, t, d);
      for (int d = 0; d < D2; ++d) out.at(i, t, D1 + d) = B.at(i, t, d);
    }
  return g.add(std::move(out), g.wants(a) || g.wants(b), [a, b, D1, D2](Graph<T>& gr, Id<T> self) {
    const Tensor<T>& G = gr.grad(self);
    const int Bn = G.dim(0), Tn = G.dim(1);
    if (gr.wants(a)) {
      Tensor<T>& da = gr.grad(a);
      for (int i = 0; i < Bn; ++i)
        for (int t = 0; t < Tn; ++t)
          for (int d = 0; d < D1; ++d) da.at(i, t, d) += G.at(i, t, d);
    }
    if (gr.wants(b)) {
      Tensor<T>& db = gr.grad(b);
      for (int i = 0; i < Bn; ++i)
        for (int t = 0; t < Tn; ++t)
          for (int d = 0; d < D2; ++d) db.at(i, t, d) += G.at(i, t, D1 + d);
    }
  });
}

// 1-d convolution over time. X[B,T,Cin], K[Cout,Cin,k]; zero padding.
// t_out = floor((T + 2*pad - k)/stride) + 1
template <typename T>
Id<T> conv1d(Graph<T>& g, Id<T> x, Id<T> kern, int stride, int pad) {
  const Tensor<T>&X = g.val(x), &K = g.val(kern);
  if (X.rank() != 3 || K.rank() != 3 || X.dim(2) != K.dim(1))
    throw ValidationError("conv1d: shape mismatch");
  if (stride <= 0 || pad < 0) throw ValidationError("conv1d: bad stride/pad");
  const int B = X.dim(0), Tin = X.dim(1), Cin = X.dim(2);
  const int Cout = K.dim(0), k = K.dim(2);
  if (Tin + 2 * pad < k) throw ValidationError("conv1d: input shorter than kernel");
  const int Tout = (Tin + 2 * pad - k) / stride + 1;
  Tensor<T> out({B, Tout, Cout});
  for (int b = 0; b < B; ++b)
    for (int to = 0; to < Tout; ++to)
      for (int co = 0; co < Cout; ++co) {
        T acc = 0;
        for (int kk = 0; kk < k; ++kk) {
          const int ti = to * stride + kk - pad;
          if (ti < 0 || ti >= Tin) continue;
          const T* xrow = &X.at(b, ti, 0);
          const T* krow = &K.at(co, 0, kk);
          for (int ci = 0; ci < Cin; ++ci) acc += xrow[ci] * krow[static_cast<size_t>(ci) * k];
        }
        out.at(b, to, co) = acc;
      }
  return g.add(std::move(out), g.wants(x) || g.wants(kern),
               [x, kern, stride, pad](Graph<T>& gr, Id<T> self) {
                 const Tensor<T>& G = gr.grad(self);
                 const Tensor<T>&X = gr.val(x), &K = gr.val(kern);
                 const int B = X.dim(0), Tin = X.dim(1), Cin = X.dim(2);
                 const int Cout = K.dim(0), k = K.dim(2), Tout = G.dim(1);
                 const bool wx = gr.wants(x), wk = gr.wants(kern);
                 Tensor<T>* dK = wk ? &gr.grad(kern) : nullptr;
                 Tensor<T>* dX = wx ? &gr.grad(x) : nullptr;
                 for (int b = 0; b < B; ++b)
                   for (int to = 0; to < Tout; ++to)
                     for (int co = 0; co < Cout; ++co) {
                       const T go = G.at(b, to, co);
                       if (go == T(0)) continue;
                       for (int kk = 0; kk < k; ++kk) {
                         const int ti = to * stride + kk - pad;
                         if (ti < 0 || ti >= Tin) continue;
                         for (int ci = 0; ci < Cin; ++ci) {
                           if (dK) dK->at(co, ci, kk) += go * X.at(b, ti, ci);
                           if (dX) dX->at(b, ti, ci) += go * K.at(co, ci, kk);
                         }
                       }
                     }
               });
}

// out = keep*a + (1-keep)*b with keep a per-row 0/1 vector of length B.
// keep is data, not a differentiable node.
template <typename T>
Id<T> mask_rows(Graph<T>& g, const std::vector<T>& keep, Id<T> a, Id<T> b) {
  const Tensor<T>&A = g.val(a), &B = g.val(b);
  if (!A.same_shape(B) || A.rank() != 2 || static_cast<int>(keep.size()) != A.dim(0))
    throw ValidationError("mask_rows: shape mismatch");
  const int m = A.dim(0), n = A.dim(1);
  Tensor<T> out({m, n});
  for (int i = 0; i < m; ++i) {
    const T w = keep[static_cast<size_t>(i)];
    for (int j = 0; j < n; ++j) out.at(i, j) = w * A.at(i, j) + (T(1) - w) * B.at(i, j);
  }
  return g.add(std::move(out), g.wants(a) || g.wants(b), [keep, a, b](Graph<T>& gr, Id<T> self) {
    const Tensor<T>& G = gr.grad(self);
    const int m = G.dim(0), n = G.dim(1);
    if (gr.wants(a)) {
      Tensor<T>& da = gr.grad(a);
      for (int i = 0; i < m; ++i) {
        const T w = keep[static_cast<size_t>(i)];
        for (int j = 0; j < n; ++j) da.at(i, j) += w * G.at(i, j);
      }
    }
    if (gr.wants(b)) {
      Tensor<T>& db = gr.grad(b);
      for (int i = 0; i < m; ++i) {
        const T w = T(1) - keep[static_cast<size_t>(i)];
        for (int j = 0; j < n; ++j) db.at(i, j) += w * G.at(i, j);
      }
    }
  });
}

// out = (1-gate)*a + gate*b, all same shape (the GRU state blend)
template <typename T>
Id<T> lerp(Graph<T>& g, Id<T> gate, Id<T> a, Id<T> b) {
  const Tensor<T>&Z = g.val(gate), &A = g.val(a), &B = g.val(b);
  if (!Z.same_shape(A) || !Z.same_shape(B)) throw ValidationError("lerp: shape mismatch");
  Tensor<T> out = A;
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = (T(1) - Z.v[i]) * A.v[i] + Z.v[i] * B.v[i];
  return g.add(std::move(out), g.wants(gate) || g.wants(a) || g.wants(b),
               [gate, a, b](Graph<T>& gr, Id<T> self) {
                 const Tensor<T>& G = gr.grad(self);
                 const Tensor<T>&Z = gr.val(gate), &A = gr.val(a), &B = gr.val(b);
                 if (gr.wants(gate)) {
                   Tensor<T>& dz = gr.grad(gate);
                   for (size_t i = 0; i < G.v.size(); ++i)
                     dz.v[i] += G.v[i] * (B.v[i] - A.v[i]);
                 }
                 if (gr.wants(a)) {
                   Tensor<T>& da = gr.grad(a);
                   for (size_t i = 0; i < G.v.size(); ++i)
                     da.v[i] += G.v[i] * (T(1) - Z.v[i]);
                 }
                 if (gr.wants(b)) {
                   Tensor<T>& db = gr.grad(b);
                   for (size_t i = 0; i < G.v.size(); ++i) db.v[i] += G.v[i] * Z.v[i];
                 }
               });
}

// Softmax over the time axis, independently per (batch, feature).
// mask[B,T] selects valid frames; masked positions are exactly 0 in the
// output. Max-subtraction keeps the exponentials in range.
template <typename T>
Id<T> softmax_over_time(Graph<T>& g, Id<T> s, const Tensor<T>& mask) {
  const Tensor<T>& S = g.val(s);
  if (S.rank() != 3) throw ValidationError("softmax_over_time: want [B,T,D]");
  const int B = S.dim(0), Tn = S.dim(1), D = S.dim(2);
  if (mask.rank() != 2 || mask.dim(0) != B || mask.dim(1) != Tn)
    throw ValidationError("softmax_over_time: mask shape mismatch");
  Tensor<T> out({B, Tn, D});
  for (int b = 0; b < B; ++b) {
    int n_valid = 0;
    for (int t = 0; t < Tn; ++t)
      if (mask.at(b, t) > T(0.5)) ++n_valid;
    if (n_valid == 0) throw ValidationError("softmax_over_time: zero valid frames");
    for (int d = 0; d < D; ++d) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int t = 0; t < Tn; ++t)
        if (mask.at(b, t) > T(0.5)) mx = std::max(mx, S.at(b, t, d));
      T z = 0;
      for (int t = 0; t < Tn; ++t)
        if (mask.at(b, t) > T(0.5)) z += std::exp(S.at(b, t, d) - mx);
      for (int t = 0; t < Tn; ++t)
        out.at(b, t, d) = mask.at(b, t) > T(0.5) ? std::exp(S.at(b, t, d) - mx) / z : T(0);
    }
  }
  return g.add(std::move(out), g.wants(s), [s, mask](Graph<T>& gr, Id<T> self) {
    if (!gr.wants(s)) return;
    const Tensor<T>&G = gr.grad(self), &Y = gr.val(self);
    Tensor<T>& ds = gr.grad(s);
    const int B = Y.dim(0), Tn = Y.dim(1), D = Y.dim(2);
    for (int b = 0; b < B; ++b)
      for (int d = 0; d < D; ++d) {
        T dot = 0;
        for (int t = 0; t < Tn; ++t) dot += Y.at(b, t, d) * G.at(b, t, d);
        for (int t = 0; t < Tn; ++t)
          if (mask.at(b, t) > T(0.5))
            ds.at(b, t, d) += Y.at(b, t, d) * (G.at(b, t, d) - dot);
      }
  });
}

// sum_t A[b,t,d] * H[b,t,d] -> [B,D]
template <typename T>
Id<T> weighted_time_sum(Graph<T>& g, Id<T> a, Id<T> h) {
  const Tensor<T>&A = g.val(a), &H = g.val(h);
  if (!A.same_shape(H) || A.rank() != 3) throw ValidationError("weighted_time_sum: shape mismatch");
  const int B = A.dim(0), Tn = A.dim(1), D = A.dim(2);
  Tensor<T> out({B, D});
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < Tn; ++t)
      for (int d = 0; d < D; ++d) out.at(b, d) += A.at(b, t, d) * H.at(b, t, d);
  return g.add(std::move(out), g.wants(a) || g.wants(h), [a, h](Graph<T>& gr, Id<T> self) {
    const Tensor<T>& G = gr.grad(self);
    const Tensor<T>&A = gr.val(a), &H = gr.val(h);
    const int B = A.dim(0), Tn = A.dim(1), D = A.dim(2);
    if (gr.wants(a)) {
      Tensor<T>& da = gr.grad(a);
      for (int b = 0; b < B; ++b)
        for (int t = 0; t < Tn; ++t)
          for (int d = 0; d < D; ++d) da.at(b, t, d) += G.at(b, d) * H.at(b, t, d);
    }
    if (gr.wants(h)) {
      Tensor<T>& dh = gr.grad(h);
      for (int b = 0; b < B; ++b)
        for (int t = 0; t < Tn; ++t)
          for (int d = 0; d < D; ++d) dh.at(b, t, d) += G.at(b, d) * A.at(b, t, d);
    }
  });
}

// mean over valid frames -> [B,D]
template <typename T>
Id<T> masked_time_mean(Graph<T>& g, Id<T> h, const Tensor<T>& mask) {
  const Tensor<T>& H = g.val(h);
  if (H.rank() != 3) throw ValidationError("masked_time_mean: want [B,T,D]");
  const int B = H.dim(0), Tn = H.dim(1), D = H.dim(2);
  if (mask.rank() != 2 || mask.dim(0) != B || mask.dim(1) != Tn)
    throw ValidationError("masked_time_mean: mask shape mismatch");
  Tensor<T> out({B, D});
  std::vector<T> inv_len(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    int n = 0;
    for (int t = 0; t < Tn; ++t)
      if (mask.at(b, t) > T(0.5)) ++n;
    if (n == 0) throw ValidationError("masked_time_mean: zero valid frames");
    inv_len[static_cast<size_t>(b)] = T(1) / static_cast<T>(n);
    for (int t = 0; t < Tn; ++t)
      if (mask.at(b, t) > T(0.5))
        for (int d = 0; d < D; ++d) out.at(b, d) += H.at(b, t, d);
    for (int d = 0; d < D; ++d) out.at(b, d) *= inv_len[static_cast<size_t>(b)];
  }
  return g.add(std::move(out), g.wants(h), [h, mask, inv_len](Graph<T>& gr, Id<T> self) {
    if (!gr.wants(h)) return;
    const Tensor<T>& G = gr.grad(self);
    Tensor<T>& dh = gr.grad(h);
    const int B = dh.dim(0), Tn = dh.dim(1), D = dh.dim(2);
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < Tn; ++t)
        if (mask.at(b, t) > T(0.5))
          for (int d = 0; d < D; ++d)
            dh.at(b, t, d) += G.at(b, d) * inv_len[static_cast<size_t>(b)];
  });
}

// Row-wise x / ||x||_2. Accepts [D] or [B,D].
template <typename T>
Id<T> l2_normalize_rows(Graph<T>& g, Id<T> x) {
  const Tensor<T>& X = g.val(x);
  if (X.rank() != 1 && X.rank() != 2) throw ValidationError("l2_normalize: want [D] or [B,D]");
  const int m = X.rank() == 2 ? X.dim(0) : 1;
  const int n = X.rank() == 2 ? X.dim(1) : X.dim(0);
  Tensor<T> out = X;
  std::vector<T> inv_norm(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    T q = 0;
    for (int j = 0; j < n; ++j) {
      const T v = X.v[static_cast<size_t>(i) * n + j];
      q += v * v;
    }
    const T r = std::sqrt(q);
    if (!(r > T(1e-12))) throw ValidationError("l2_normalize: zero-norm input row");
    inv_norm[static_cast<size_t>(i)] = T(1) / r;
    for (int j = 0; j < n; ++j) out.v[static_cast<size_t>(i) * n + j] *= inv_norm[static_cast<size_t>(i)];
  }
  return g.add(std::move(out), g.wants(x), [x, inv_norm, m, n](Graph<T>& gr, Id<T> self) {
    if (!gr.wants(x)) return;
    const Tensor<T>&G = gr.grad(self), &Y = gr.val(self);
    Tensor<T>& dx = gr.grad(x);
    for (int i = 0; i < m; ++i) {
      const size_t off = static_cast<size_t>(i) * n;
      T dot = 0;
      for (int j = 0; j < n; ++j) dot += Y.v[off + j] * G.v[off + j];
      for (int j = 0; j < n; ++j)
        dx.v[off + j] += (G.v[off + j] - Y.v[off + j] * dot) * inv_norm[static_cast<size_t>(i)];
    }
  });
}

// cos(a,b) for two vectors -> scalar node
template <typename T>
Id<T> cosine_sim(Graph<T>& g, Id<T> a, Id<T> b) {
  const Tensor<T>&A = g.val(a), &B = g.val(b);
  if (A.rank() != 1 || !A.same_shape(B)) throw ValidationError("cosine_sim: want equal vectors");
  const int n = A.dim(0);
  T sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < n; ++i) {
    sab += A.at(i) * B.at(i);
    saa += A.at(i) * A.at(i);
    sbb += B.at(i) * B.at(i);
  }
  if (!(saa > T(1e-24)) || !(sbb > T(1e-24)))
    throw ValidationError("cosine_sim: zero-norm vector");
  const T denom = std::sqrt(saa * sbb);
  const T y = std::clamp(sab / denom, T(-1), T(1));
  return g.add(Tensor<T>::scalar(y), g.wants(a) || g.wants(b),
               [a, b, sab, saa, sbb, denom](Graph<T>& gr, Id<T> self) {
                 const T go = gr.grad(self).v[0];
                 const Tensor<T>&A = gr.val(a), &B = gr.val(b);
                 const int n = A.dim(0);
                 const T y = sab / denom;
                 if (gr.wants(a)) {
                   Tensor<T>& da = gr.grad(a);
                   for (int i = 0; i < n; ++i)
                     da.at(i) += go * (B.at(i) / denom - y * A.at(i) / saa);
                 }
                 if (gr.wants(b)) {
                   Tensor<T>& db = gr.grad(b);
                   for (int i = 0; i < n; ++i)
                     db.at(i) += go * (A.at(i) / denom - y * B.at(i) / sbb);
                 }
               });
}

// sum_i w_i * x_i -> scalar (w is data). Used to reduce op outputs to a
// scalar objective in the gradient checker.
template <typename T>
Id<T> weighted_sum_all(Graph<T>& g, Id<T> x, const Tensor<T>& w) {
  const Tensor<T>& X = g.val(x);
  if (X.size() != w.size()) throw ValidationError("weighted_sum_all: size mismatch");
  T acc = 0;
  for (size_t i = 0; i < X.v.size(); ++i) acc += X.v[i] * w.v[i];
  return g.add(Tensor<T>::scalar(acc), g.wants(x), [x, w](Graph<T>& gr, Id<T> self) {
    if (!gr.wants(x)) return;
    const T go = gr.grad(self).v[0];
    Tensor<T>& dx = gr.grad(x);
    for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += go * w.v[i];
  });
}

template <typename T>
Id<T> sum_all(Graph<T>& g, Id<T> x) {
  const Tensor<T>& X = g.val(x);
  T acc = 0;
  for (const T& v : X.v) acc += v;
  return g.add(Tensor<T>::scalar(acc), g.wants(x), [x](Graph<T>& gr, Id<T> self) {
    if (!gr.wants(x)) return;
    const T go = gr.grad(self).v[0];
    Tensor<T>& dx = gr.grad(x);
    for (auto& v : dx.v) v += go;
  });
}

}  // namespace ops

}  // namespace s2i
