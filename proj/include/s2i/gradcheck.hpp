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

#include <string>
#include <vector>

#include "s2i/graph.hpp"

namespace s2i {

// Central finite differences against the graph's reverse-mode gradients.
// Runs in double regardless of the training scalar type.
struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  // 0 checks every element; otherwise a seeded subsample per input tensor.
  int max_elems_per_input = 0;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_location;
  bool forward_finite = true;
  long elements_checked = 0;

  bool pass(double tol) const { return forward_finite && max_rel_err < tol; }
};

// build: (Graph<double>&, input ids) -> scalar loss id. It is re-invoked on
// perturbed copies of the inputs, so it must be a pure function of them.
template <typename BuildFn>
GradCheckReport grad_check(const std::vector<Tensor<double>>& inputs, BuildFn build,
                           const GradCheckOptions& opts = {}) {
  GradCheckReport report;

  auto eval = [&](const std::vector<Tensor<double>>& xs, bool with_grad,
                  std::vector<Tensor<double>>* grads_out) -> double {
    Graph<double> g;
    std::vector<Graph<double>::Id> ids;
    ids.reserve(xs.size());
    for (const auto& x : xs) ids.push_back(g.input(x, with_grad));
    const auto loss = build(g, ids);
    const double f = g.val(loss).v[0];
    if (with_grad && grads_out) {
      g.backward(loss);
      grads_out->clear();
      for (auto id : ids) grads_out->push_back(g.grad(id));
    }
    return f;
  };

  std::vector<Tensor<double>> analytic;
  const double f0 = eval(inputs, true, &analytic);
  if (!std::isfinite(f0)) {
    report.forward_finite = false;
    report.worst_location = "forward value";
    return report;
  }

  Rng rng(opts.seed);
  std::vector<Tensor<double>> work = inputs;
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    const long n = inputs[ti].size();
    std::vector<long> elems;
    if (opts.max_elems_per_input > 0 && n > opts.max_elems_per_input) {
      for (int e = 0; e < opts.max_elems_per_input; ++e)
        elems.push_back(rng.uniform_int(0, n - 1));
    } else {
      for (long e = 0; e < n; ++e) elems.push_back(e);
    }
    for (long e : elems) {
      const double saved = work[ti].v[static_cast<size_t>(e)];
      work[ti].v[static_cast<size_t>(e)] = saved + opts.h;
      const double fp = eval(work, false, nullptr);
      work[ti].v[static_cast<size_t>(e)] = saved - opts.h;
      const double fm = eval(work, false, nullptr);
      work[ti].v[static_cast<size_t>(e)] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.forward_finite = false;
        report.worst_location =
            "input " + std::to_string(ti) + " [" + std::to_string(e) + "] perturbed forward";
        return report;
      }
      const double numeric = (fp - fm) / (2.0 * opts.h);
      const double a = analytic[ti].v[static_cast<size_t>(e)];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.elements_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_location = "input " + std::to_string(ti) + " [" + std::to_string(e) + "]";
      }
    }
  }
  return report;
}

}  // namespace s2i
