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
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2i/tensor.hpp"

namespace s2i {

struct RetrievalReport {
  std::string direction;           // "caption_to_image" or "image_to_caption"
  double r_at_1 = 0, r_at_5 = 0, r_at_10 = 0;  // percentages
  double ci_1 = 0, ci_5 = 0, ci_10 = 0;        // 95% half-widths
  double median_rank = 0;
  int n_queries = 0;

  // snapshot-selection scalar: the sum of the three recalls
  double recall_sum() const { return r_at_1 + r_at_5 + r_at_10; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["direction"] = direction;
    j["r_at"] = {{"1", r_at_1}, {"5", r_at_5}, {"10", r_at_10}};
    j["ci95"] = {{"1", ci_1}, {"5", ci_5}, {"10", ci_10}};
    j["median_rank"] = median_rank;
    j["n_queries"] = n_queries;
    return j;
  }
};

namespace detail {

template <typename T>
double dot_rows(const Tensor<T>& a, int ra, const Tensor<T>& b, int rb) {
  const int d = a.dim(1);
  const T* pa = a.data() + static_cast<size_t>(ra) * d;
  const T* pb = b.data() + static_cast<size_t>(rb) * d;
  double acc = 0;
  for (int i = 0; i < d; ++i) acc += static_cast<double>(pa[i]) * static_cast<double>(pb[i]);
  return acc;
}

// Rank of target under descending similarity with stable (input-order) tie
// breaking: 1 + #{better} + #{equal at an earlier index}.
inline int stable_rank(const std::vector<double>& sims, int target) {
  int rank = 1;
  const double st = sims[static_cast<size_t>(target)];
  for (int j = 0; j < static_cast<int>(sims.size()); ++j) {
    if (j == target) continue;
    if (sims[static_cast<size_t>(j)] > st || (sims[static_cast<size_t>(j)] == st && j < target))
      ++rank;
  }
  return rank;
}

}  // namespace detail

// For each caption, the rank of its matched image among the whole gallery.
template <typename T>
std::vector<int> rank_caption_to_image(const Tensor<T>& cap_embs, const Tensor<T>& img_embs,
                                       const std::vector<int>& truth) {
  if (cap_embs.rank() != 2 || img_embs.rank() != 2 || cap_embs.dim(1) != img_embs.dim(1))
    throw ValidationError("rank_caption_to_image: embedding shape mismatch");
  if (static_cast<int>(truth.size()) != cap_embs.dim(0))
    throw ValidationError("rank_caption_to_image: truth size mismatch");
  const int n_img = img_embs.dim(0);
  std::vector<int> ranks;
  ranks.reserve(truth.size());
  std::vector<double> sims(static_cast<size_t>(n_img));
  for (int c = 0; c < cap_embs.dim(0); ++c) {
    const int target = truth[static_cast<size_t>(c)];
    if (target < 0 || target >= n_img)
      throw ValidationError("rank_caption_to_image: truth references a missing image");
    for (int i = 0; i < n_img; ++i)
      sims[static_cast<size_t>(i)] = detail::dot_rows(cap_embs, c, img_embs, i);
    ranks.push_back(detail::stable_rank(sims, target));
  }
  return ranks;
}

// For each image, the rank of its best-ranked correct caption.
template <typename T>
std::vector<int> rank_image_to_caption(const Tensor<T>& img_embs, const Tensor<T>& cap_embs,
                                       const std::vector<std::vector<int>>& truth) {
  if (img_embs.rank() != 2 || cap_embs.rank() != 2 || cap_embs.dim(1) != img_embs.dim(1))
    throw ValidationError("rank_image_to_caption: embedding shape mismatch");
  if (static_cast<int>(truth.size()) != img_embs.dim(0))
    throw ValidationError("rank_image_to_caption: truth size mismatch");
  const int n_cap = cap_embs.dim(0);
  std::vector<int> ranks;
  ranks.reserve(truth.size());
  std::vector<double> sims(static_cast<size_t>(n_cap));
  for (int i = 0; i < img_embs.dim(0); ++i) {
    const auto& correct = truth[static_cast<size_t>(i)];
    if (correct.empty())
      throw ValidationError("rank_image_to_caption: image with zero captions");
    for (int c = 0; c < n_cap; ++c)
      sims[static_cast<size_t>(c)] = detail::dot_rows(img_embs, i, cap_embs, c);
    int best = std::numeric_limits<int>::max();
    for (int c : correct) {
      if (c < 0 || c >= n_cap)
        throw ValidationError("rank_image_to_caption: truth references a missing caption");
      best = std::min(best, detail::stable_rank(sims, c));
    }
    ranks.push_back(best);
  }
  return ranks;
}

// R@N with a normal-approximation binomial CI, plus the median rank
// (midpoint of the two middle values for even counts).
inline RetrievalReport summarize(const std::vector<int>& ranks, const std::string& direction) {
  if (ranks.empty()) throw ValidationError("summarize: empty rank list");
  RetrievalReport r;
  r.direction = direction;
  r.n_queries = static_cast<int>(ranks.size());
  const double n = static_cast<double>(ranks.size());
  auto at = [&](int N, double* pct, double* ci) {
    long hits = 0;
    for (int rk : ranks)
      if (rk <= N) ++hits;
    const double p = static_cast<double>(hits) / n;
    *pct = 100.0 * p;
    *ci = 1.96 * std::sqrt(p * (1.0 - p) / n) * 100.0;
  };
  at(1, &r.r_at_1, &r.ci_1);
  at(5, &r.r_at_5, &r.ci_5);
  at(10, &r.r_at_10, &r.ci_10);
  std::vector<int> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  const size_t mid = sorted.size() / 2;
  r.median_rank = sorted.size() % 2 == 1
                      ? static_cast<double>(sorted[mid])
                      : (static_cast<double>(sorted[mid - 1]) + sorted[mid]) / 2.0;
  return r;
}

inline std::string retrieval_csv(const std::vector<RetrievalReport>& reports) {
  std::string out = "metric,direction,value\n";
  for (const auto& r : reports) {
    auto row = [&](const std::string& name, double v) {
      out += name + "," + r.direction + "," + nlohmann::json(v).dump() + "\n";
    };
    row("r_at_1", r.r_at_1);
    row("r_at_5", r.r_at_5);
    row("r_at_10", r.r_at_10);
    row("ci95_1", r.ci_1);
    row("ci95_5", r.ci_5);
    row("ci95_10", r.ci_10);
    row("median_rank", r.median_rank);
  }
  return out;
}

}  // namespace s2i
