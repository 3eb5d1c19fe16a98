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
#include <numeric>
#include <vector>

#include "s2i/graph.hpp"

namespace s2i {

struct LossConfig {
  double margin = 0.2;
  double hard_fraction = 0.25;

  void validate() const {
    if (!(margin > 0)) throw ValidationError("loss: margin must be > 0");
    if (!(hard_fraction > 0) || hard_fraction > 1)
      throw ValidationError("loss: hard_fraction must be in (0,1]");
  }

  // negatives retained per anchor out of n-1 mismatched candidates
  int negatives_per_anchor(int batch) const {
    return static_cast<int>(std::ceil(hard_fraction * (batch - 1)));
  }
};

// Indices of the m largest similarities; ties broken by lowest index.
template <typename T>
std::vector<int> select_hard_negatives(const std::vector<T>& sims, int m) {
  if (m <= 0) throw ValidationError("select_hard_negatives: m must be positive");
  if (m > static_cast<int>(sims.size()))
    throw ValidationError("select_hard_negatives: m exceeds candidate count");
  std::vector<int> idx(sims.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (sims[static_cast<size_t>(a)] != sims[static_cast<size_t>(b)])
      return sims[static_cast<size_t>(a)] > sims[static_cast<size_t>(b)];
    return a < b;
  });
  idx.resize(static_cast<size_t>(m));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Bidirectional hinge ranking loss over a matched similarity matrix
// sims[c][i] = cos(caption c, image i); the diagonal holds the matched
// pairs. Per anchor only the hardest ceil(hard_fraction*(n-1)) mismatched
// candidates enter the sum, re-selected from the current similarities on
// every forward pass; the gradient flows only through the selected terms
// that clear the hinge.
template <typename T>
typename Graph<T>::Id hinge_rank_loss(Graph<T>& g, typename Graph<T>::Id sims,
                                      const LossConfig& cfg) {
  cfg.validate();
  const Tensor<T>& S = g.val(sims);
  if (S.rank() != 2 || S.dim(0) != S.dim(1))
    throw ValidationError("hinge_rank_loss: want a square similarity matrix");
  const int n = S.dim(0);
  if (n < 2) throw ValidationError("hinge_rank_loss: need a batch of at least 2 pairs");
  const int m = cfg.negatives_per_anchor(n);
  const T alpha = static_cast<T>(cfg.margin);

  struct ActiveTerm {
    int neg_r, neg_c;   // mismatched similarity entry
    int anchor;         // diagonal entry of the anchor
  };
  std::vector<ActiveTerm> active;
  T total = 0;

  std::vector<T> cand(static_cast<size_t>(n - 1));
  std::vector<int> cand_idx(static_cast<size_t>(n - 1));
  // caption anchors: each row against its mismatched images
  for (int r = 0; r < n; ++r) {
    int k = 0;
    for (int j = 0; j < n; ++j) {
      if (j == r) continue;
      cand[static_cast<size_t>(k)] = S.at(r, j);
      cand_idx[static_cast<size_t>(k)] = j;
      ++k;
    }
    for (int sel : select_hard_negatives(cand, m)) {
      const int j = cand_idx[static_cast<size_t>(sel)];
      const T term = S.at(r, j) - S.at(r, r) + alpha;
      if (term > T(0)) {
        total += term;
        active.push_back({r, j, r});
      }
    }
  }
  // image anchors: each column against its mismatched captions
  for (int c = 0; c < n; ++c) {
    int k = 0;
    for (int i = 0; i < n; ++i) {
      if (i == c) continue;
      cand[static_cast<size_t>(k)] = S.at(i, c);
      cand_idx[static_cast<size_t>(k)] = i;
      ++k;
    }
    for (int sel : select_hard_negatives(cand, m)) {
      const int i = cand_idx[static_cast<size_t>(sel)];
      const T term = S.at(i, c) - S.at(c, c) + alpha;
      if (term > T(0)) {
        total += term;
        active.push_back({i, c, c});
      }
    }
  }

  return g.add(Tensor<T>::scalar(total), g.wants(sims),
               [sims, active](Graph<T>& gr, typename Graph<T>::Id self) {
                 if (!gr.wants(sims)) return;
                 const T go = gr.grad(self).v[0];
                 Tensor<T>& ds = gr.grad(sims);
                 for (const auto& t : active) {
                   ds.at(t.neg_r, t.neg_c) += go;
                   ds.at(t.anchor, t.anchor) -= go;
                 }
               });
}

}  // namespace s2i
