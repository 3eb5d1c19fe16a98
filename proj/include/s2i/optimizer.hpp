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

#include <map>
#include <string>

#include "s2i/tensor.hpp"

namespace s2i {

// Cosine-shaped cyclic schedule: lr_max at the start of a cycle, annealing
// smoothly to lr_min at the end (where snapshots are taken).
inline double cyclic_lr_frac(double frac, double lr_min, double lr_max) {
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * frac));
}

inline double cyclic_lr(long step, long steps_per_cycle, double lr_min, double lr_max) {
  if (steps_per_cycle <= 0) throw ValidationError("cyclic_lr: steps_per_cycle must be > 0");
  const double frac =
      static_cast<double>(step % steps_per_cycle) / static_cast<double>(steps_per_cycle);
  return cyclic_lr_frac(frac, lr_min, lr_max);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. State tensors are keyed by parameter name so the
// update order is the ParamSet's deterministic name order.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamSet<T>& params, const std::map<std::string, Tensor<T>>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      const auto git = grads.find(name);
      if (git == grads.end()) continue;
      const Tensor<T>& g = git->second;
      if (!g.same_shape(p)) throw ValidationError("adam: gradient shape mismatch for " + name);
      if (!g.all_finite())
        throw std::runtime_error("adam: non-finite gradient in tensor '" + name + "'");
      auto& m = moment1_.try_emplace(name, Tensor<T>(p.shape)).first->second;
      auto& v = moment2_.try_emplace(name, Tensor<T>(p.shape)).first->second;
      for (size_t i = 0; i < p.v.size(); ++i) {
        const double gi = static_cast<double>(g.v[i]);
        const double mi = cfg_.beta1 * static_cast<double>(m.v[i]) + (1.0 - cfg_.beta1) * gi;
        const double vi =
            cfg_.beta2 * static_cast<double>(v.v[i]) + (1.0 - cfg_.beta2) * gi * gi;
        m.v[i] = static_cast<T>(mi);
        v.v[i] = static_cast<T>(vi);
        const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
        p.v[i] = static_cast<T>(static_cast<double>(p.v[i]) - update);
      }
    }
  }

  long steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Tensor<T>> moment1_, moment2_;
};

// Scales all gradients by min(1, max_norm/||g||) over the concatenation.
template <typename T>
void clip_grad_norm(std::map<std::string, Tensor<T>>& grads, double max_norm) {
  if (max_norm <= 0) return;
  double sq = 0;
  for (const auto& [k, g] : grads)
    for (const T& x : g.v) sq += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const T s = static_cast<T>(max_norm / norm);
  for (auto& [k, g] : grads)
    for (T& x : g.v) x *= s;
}

}  // namespace s2i
