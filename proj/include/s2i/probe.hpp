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
#include <cctype>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2i/corpus.hpp"
#include "s2i/encoder.hpp"
#include "s2i/optimizer.hpp"

namespace s2i {

// --- vocabulary and targets --------------------------------------------------

// lowercase, split on whitespace, strip leading/trailing non-alphanumerics
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::string tok = text.substr(i, j - i);
      for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      size_t a = 0, b = tok.size();
      while (a < b && !std::isalnum(static_cast<unsigned char>(tok[a]))) ++a;
      while (b > a && !std::isalnum(static_cast<unsigned char>(tok[b - 1]))) --b;
      if (b > a) tokens.push_back(tok.substr(a, b - a));
    }
    i = j;
  }
  return tokens;
}

struct ProbeVocabulary {
  std::vector<std::string> words;        // fixed order: count desc, then lexicographic
  std::map<std::string, long> counts;    // corpus frequency of the kept words
  std::map<std::string, int> index;

  int size() const { return static_cast<int>(words.size()); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["words"] = words;
    nlohmann::ordered_json c;
    for (const auto& w : words) c[w] = counts.at(w);
    j["counts"] = c;
    return j;
  }
};

// Keeps word types with corpus count in [min_count, max_count] (inclusive)
// and at least min_length characters.
inline ProbeVocabulary build_vocabulary(const std::vector<std::string>& captions,
                                        long min_count = 50, long max_count = 1000,
                                        size_t min_length = 4) {
  std::map<std::string, long> all;
  for (const auto& c : captions)
    for (const auto& tok : tokenize(c)) ++all[tok];
  if (all.empty()) throw ValidationError("build_vocabulary: empty corpus");
  ProbeVocabulary v;
  for (const auto& [w, n] : all)
    if (n >= min_count && n <= max_count && w.size() >= min_length) {
      v.words.push_back(w);
      v.counts[w] = n;
    }
  std::sort(v.words.begin(), v.words.end(), [&](const std::string& a, const std::string& b) {
    if (v.counts[a] != v.counts[b]) return v.counts[a] > v.counts[b];
    return a < b;
  });
  for (int i = 0; i < v.size(); ++i) v.index[v.words[static_cast<size_t>(i)]] = i;
  return v;
}

// Binary presence vector per sentence; repetitions collapse to 1.
inline Tensor<float> presence_targets(const std::vector<std::string>& captions,
                                      const ProbeVocabulary& vocab) {
  Tensor<float> t({static_cast<int>(captions.size()), vocab.size()});
  for (size_t i = 0; i < captions.size(); ++i)
    for (const auto& tok : tokenize(captions[i])) {
      auto it = vocab.index.find(tok);
      if (it != vocab.index.end()) t.at(static_cast<int>(i), it->second) = 1.0f;
    }
  return t;
}

// --- layer taps ----------------------------------------------------------------

enum class ProbeLayer { input, gru1, gru2, gru3, attention };

inline ProbeLayer parse_probe_layer(const std::string& s) {
  if (s == "input") return ProbeLayer::input;
  if (s == "gru1") return ProbeLayer::gru1;
  if (s == "gru2") return ProbeLayer::gru2;
  if (s == "gru3") return ProbeLayer::gru3;
  if (s == "attention") return ProbeLayer::attention;
  throw ValidationError("unknown probe layer: '" + s +
                        "' (want input|gru1|gru2|gru3|attention)");
}

inline const char* probe_layer_name(ProbeLayer l) {
  switch (l) {
    case ProbeLayer::input: return "input";
    case ProbeLayer::gru1: return "gru1";
    case ProbeLayer::gru2: return "gru2";
    case ProbeLayer::gru3: return "gru3";
    case ProbeLayer::attention: return "attention";
  }
  return "?";
}

// The "untrained GRU" in front of the input tap: one bidirectional layer,
// random init with a fixed seed, never updated.
constexpr std::uint64_t kFrozenGruSeed = 0;

template <typename T>
ParamSet<T> frozen_input_gru(const EncoderConfig& cfg) {
  ParamSet<T> ps;
  const Rng master(kFrozenGruSeed);
  add_gru_params(ps, "frozen.fwd", cfg.conv_channels, cfg.gru_units, master);
  add_gru_params(ps, "frozen.bwd", cfg.conv_channels, cfg.gru_units, master);
  return ps;
}

// Fixed-size probe inputs per caption:
//   attention  -> the final embedding as-is
//   gru1..gru3 -> that layer's states mean-pooled over valid frames, L2-normed
//   input      -> trained conv, then the frozen random bi-GRU, pooled, L2-normed
template <typename T>
Tensor<T> layer_representations(const ParamSet<T>& params, const EncoderConfig& cfg,
                                const std::vector<CorpusItem>& items, ProbeLayer layer,
                                int chunk = 64) {
  if (items.empty()) throw ValidationError("layer_representations: no items");
  const ParamSet<T> frozen =
      layer == ProbeLayer::input ? frozen_input_gru<T>(cfg) : ParamSet<T>();
  Tensor<T> out({static_cast<int>(items.size()), cfg.joint_dim()});
  for (size_t base = 0; base < items.size(); base += static_cast<size_t>(chunk)) {
    const size_t end = std::min(items.size(), base + static_cast<size_t>(chunk));
    std::vector<const Tensor<float>*> feats;
    for (size_t i = base; i < end; ++i) feats.push_back(&items[i].features.data);
    std::vector<int> lengths;
    Tensor<T> padded = pad_feature_batch<T>(feats, &lengths);
    Graph<T> g;
    auto ids = load_param_nodes(g, params, false);
    auto fwd = encode_caption_batch(g, ids, cfg, padded, lengths);

    typename Graph<T>::Id rep;
    switch (layer) {
      case ProbeLayer::attention:
        rep = fwd.embedding;
        break;
      case ProbeLayer::gru1:
      case ProbeLayer::gru2:
      case ProbeLayer::gru3: {
        const size_t l = layer == ProbeLayer::gru1 ? 0 : layer == ProbeLayer::gru2 ? 1 : 2;
        if (l >= fwd.gru_out.size())
          throw ValidationError("layer_representations: encoder has no such GRU layer");
        rep = ops::l2_normalize_rows(
            g, ops::masked_time_mean(g, fwd.gru_out[l], fwd.out_mask));
        break;
      }
      case ProbeLayer::input: {
        auto frozen_ids = load_param_nodes(g, frozen, false);
        auto hf = gru_layer(g, fwd.conv_out, gru_nodes(frozen_ids, "frozen.fwd"),
                            fwd.out_mask, false);
        auto hb = gru_layer(g, fwd.conv_out, gru_nodes(frozen_ids, "frozen.bwd"),
                            fwd.out_mask, true);
        auto cat = ops::concat_feat(g, hf, hb);
        rep = ops::l2_normalize_rows(g, ops::masked_time_mean(g, cat, fwd.out_mask));
        break;
      }
      default:
        throw ValidationError("layer_representations: bad layer");
    }
    const Tensor<T>& R = g.val(rep);
    for (size_t i = base; i < end; ++i)
      for (int j = 0; j < cfg.joint_dim(); ++j)
        out.at(static_cast<int>(i), j) = R.at(static_cast<int>(i - base), j);
  }
  return out;
}

// --- probe classifier ----------------------------------------------------------

// Numerically stable mean binary cross entropy over logits; targets are data.
template <typename T>
typename Graph<T>::Id bce_with_logits(Graph<T>& g, typename Graph<T>::Id z,
                                      const Tensor<T>& targets) {
  const Tensor<T>& Z = g.val(z);
  if (!Z.same_shape(targets)) throw ValidationError("bce_with_logits: shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(Z.size());
  double acc = 0;
  for (size_t i = 0; i < Z.v.size(); ++i) {
    const double x = static_cast<double>(Z.v[i]);
    const double t = static_cast<double>(targets.v[i]);
    const double softplus = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    acc += softplus - t * x;
  }
  return g.add(Tensor<T>::scalar(static_cast<T>(acc * inv_n)), g.wants(z),
               [z, targets, inv_n](Graph<T>& gr, typename Graph<T>::Id self) {
                 if (!gr.wants(z)) return;
                 const T go = gr.grad(self).v[0];
                 const Tensor<T>& Z = gr.val(z);
                 Tensor<T>& dz = gr.grad(z);
                 for (size_t i = 0; i < Z.v.size(); ++i) {
                   const T s = T(1) / (T(1) + std::exp(-Z.v[i]));
                   dz.v[i] += go * static_cast<T>(inv_n) * (s - targets.v[i]);
                 }
               });
}

struct ProbeTrainConfig {
  double lr = 1e-3;
  int epochs = 32;
  int batch_size = 32;
  std::uint64_t seed = 0;
  AdamConfig adam;
};

struct ProbeModel {
  Tensor<float> w;  // [vocab, rep_dim]
  Tensor<float> b;  // [vocab]
};

// Single linear layer + sigmoid trained with BCE and a constant-lr Adam.
inline ProbeModel train_probe(const Tensor<float>& reps, const Tensor<float>& targets,
                              const ProbeTrainConfig& cfg) {
  if (reps.rank() != 2 || targets.rank() != 2 || reps.dim(0) != targets.dim(0))
    throw ValidationError("train_probe: reps/targets row mismatch");
  const int n = reps.dim(0), d = reps.dim(1), v = targets.dim(1);
  ProbeModel model{Tensor<float>({v, d}), Tensor<float>({v})};
  ParamSet<float> ps;
  ps.add("probe.w", model.w);
  ps.add("probe.b", model.b);
  Adam<float> adam(cfg.adam);
  const Rng master(cfg.seed);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng = master.derive(0x9B0E0000ull + static_cast<std::uint64_t>(epoch));
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    for (int lo = 0; lo < n; lo += cfg.batch_size) {
      const int hi = std::min(n, lo + cfg.batch_size);
      Tensor<float> x({hi - lo, d});
      Tensor<float> t({hi - lo, v});
      for (int i = lo; i < hi; ++i) {
        const int row = order[static_cast<size_t>(i)];
        for (int j = 0; j < d; ++j) x.at(i - lo, j) = reps.at(row, j);
        for (int j = 0; j < v; ++j) t.at(i - lo, j) = targets.at(row, j);
      }
      Graph<float> g;
      auto wid = g.input(ps.get("probe.w"), true);
      auto bid = g.input(ps.get("probe.b"), true);
      auto xid = g.input(x, false);
      auto loss = bce_with_logits(g, ops::add_bias(g, ops::matmul_nt(g, xid, wid), bid), t);
      g.backward(loss);
      std::map<std::string, Tensor<float>> grads;
      grads.emplace("probe.w", g.grad(wid));
      grads.emplace("probe.b", g.grad(bid));
      adam.step(ps, grads, cfg.lr);
    }
  }
  model.w = ps.get("probe.w");
  model.b = ps.get("probe.b");
  return model;
}

inline Tensor<float> probe_scores(const ProbeModel& model, const Tensor<float>& reps) {
  const int n = reps.dim(0), v = model.w.dim(0), d = model.w.dim(1);
  if (reps.dim(1) != d) throw ValidationError("probe_scores: rep dim mismatch");
  Tensor<float> out({n, v});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < v; ++j) {
      double acc = model.b.at(j);
      for (int k = 0; k < d; ++k) acc += static_cast<double>(reps.at(i, k)) * model.w.at(j, k);
      out.at(i, j) = static_cast<float>(1.0 / (1.0 + std::exp(-acc)));
    }
  return out;
}

// --- metrics ---------------------------------------------------------------------

// Rank-statistic AUC with midrank tie handling, pooled over all decisions.
inline double mann_whitney_auc(const std::vector<double>& scores,
                               const std::vector<char>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw ValidationError("auc: bad inputs");
  long n_pos = 0;
  for (char l : labels) n_pos += l ? 1 : 0;
  const long n_neg = static_cast<long>(labels.size()) - n_pos;
  if (n_pos == 0) throw ValidationError("auc: no positive decisions, AUC undefined");
  if (n_neg == 0) throw ValidationError("auc: no negative decisions, AUC undefined");
  std::vector<size_t> idx(scores.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (size_t k = i; k < j; ++k)
      if (labels[idx[k]]) rank_sum_pos += midrank;
    i = j;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// F1 over pooled decisions: predict present iff score >= threshold.
inline double f1_at_threshold(const std::vector<double>& scores,
                              const std::vector<char>& labels, double threshold) {
  long tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i]) ++tp;
    else if (pred) ++fp;
    else if (labels[i]) ++fn;
  }
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

struct ProbeReport {
  std::string layer;
  std::vector<std::pair<double, double>> f1_curve;  // (threshold, F1), 20 points
  double auc = 0;
  int n_sentences = 0;
  int vocab_size = 0;

  double max_f1() const {
    double m = 0;
    for (const auto& [t, f] : f1_curve) m = std::max(m, f);
    return m;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["layer"] = layer;
    j["auc"] = auc;
    nlohmann::ordered_json curve = nlohmann::ordered_json::array();
    for (const auto& [t, f] : f1_curve) curve.push_back({{"threshold", t}, {"f1", f}});
    j["f1_curve"] = curve;
    j["n_sentences"] = n_sentences;
    j["vocab_size"] = vocab_size;
    return j;
  }

  std::string curve_csv() const {
    std::string out = "threshold,f1\n";
    for (const auto& [t, f] : f1_curve)
      out += nlohmann::json(t).dump() + "," + nlohmann::json(f).dump() + "\n";
    return out;
  }
};

// Thresholds 0.05, 0.10, ..., 1.00 (20 equally spaced points); micro F1 by
// default, macro behind the flag.
inline ProbeReport evaluate_probe(const ProbeModel& model, const Tensor<float>& reps,
                                  const Tensor<float>& targets, const std::string& layer_tag,
                                  bool macro_f1 = false) {
  const Tensor<float> s = probe_scores(model, reps);
  if (!s.same_shape(targets)) throw ValidationError("evaluate_probe: shape mismatch");
  const int n = s.dim(0), v = s.dim(1);
  ProbeReport r;
  r.layer = layer_tag;
  r.n_sentences = n;
  r.vocab_size = v;
  std::vector<double> pooled(s.v.begin(), s.v.end());
  std::vector<char> labels(targets.v.size());
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = targets.v[i] > 0.5f ? 1 : 0;
  r.auc = mann_whitney_auc(pooled, labels);
  for (int k = 1; k <= 20; ++k) {
    const double thr = 0.05 * k;
    double f1;
    if (!macro_f1) {
      f1 = f1_at_threshold(pooled, labels, thr);
    } else {
      double acc = 0;
      for (int j = 0; j < v; ++j) {
        std::vector<double> ws(static_cast<size_t>(n));
        std::vector<char> wl(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
          ws[static_cast<size_t>(i)] = s.at(i, j);
          wl[static_cast<size_t>(i)] = targets.at(i, j) > 0.5f ? 1 : 0;
        }
        acc += f1_at_threshold(ws, wl, thr);
      }
      f1 = acc / v;
    }
    r.f1_curve.emplace_back(thr, f1);
  }
  return r;
}

}  // namespace s2i
