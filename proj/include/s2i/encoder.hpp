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

#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2i/graph.hpp"
#include "s2i/gru.hpp"

namespace s2i {

// Image branch: linear projection + L2 norm. Caption branch: 1-d conv
// (stride 2, kernel 6, no nonlinearity) -> 3 bidirectional GRU layers
// (forward and backward states concatenated, forward first) -> per-feature
// time softmax attention -> L2 norm. joint_dim = 2 * gru_units.
struct EncoderConfig {
  int acoustic_dim = 39;
  int conv_channels = 64;
  int conv_kernel = 6;
  int conv_stride = 2;
  int conv_padding = 2;
  int gru_layers = 3;
  int gru_units = 1024;
  int attn_hidden = 128;
  int image_feat_dim = 2048;

  int joint_dim() const { return 2 * gru_units; }

  int conv_out_len(int t) const {
    return (t + 2 * conv_padding - conv_kernel) / conv_stride + 1;
  }

  static EncoderConfig paper() { return EncoderConfig{}; }

  // Small enough that the full pipeline trains on a CPU in minutes.
  static EncoderConfig toy() {
    EncoderConfig c;
    c.conv_channels = 16;
    c.gru_units = 64;
    c.attn_hidden = 16;
    c.image_feat_dim = 64;
    return c;
  }

  static EncoderConfig preset(const std::string& name) {
    if (name == "paper") return paper();
    if (name == "toy") return toy();
    throw ValidationError("unknown encoder preset: '" + name + "'");
  }

  void validate() const {
    if (acoustic_dim <= 0 || conv_channels <= 0 || gru_units <= 0 || attn_hidden <= 0 ||
        image_feat_dim <= 0 || gru_layers <= 0)
      throw ValidationError("encoder config: dimensions must be positive");
    if (conv_kernel <= 0 || conv_stride <= 0 || conv_padding < 0)
      throw ValidationError("encoder config: bad conv geometry");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["acoustic_dim"] = acoustic_dim;
    j["conv_channels"] = conv_channels;
    j["conv_kernel"] = conv_kernel;
    j["conv_stride"] = conv_stride;
    j["conv_padding"] = conv_padding;
    j["gru_layers"] = gru_layers;
    j["gru_units"] = gru_units;
    j["attn_hidden"] = attn_hidden;
    j["image_feat_dim"] = image_feat_dim;
    return j;
  }

  // Partial override document applied on top of a base (usually a preset).
  static EncoderConfig from_json(const nlohmann::json& j, EncoderConfig c = EncoderConfig{}) {
    static const std::vector<std::string> known = {
        "acoustic_dim", "conv_channels", "conv_kernel",  "conv_stride",    "conv_padding",
        "gru_layers",   "gru_units",     "attn_hidden",  "image_feat_dim"};
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find(known.begin(), known.end(), it.key()) == known.end())
        throw ValidationError("encoder config: unknown key '" + it.key() + "'");
    if (j.contains("acoustic_dim")) c.acoustic_dim = j.at("acoustic_dim").get<int>();
    if (j.contains("conv_channels")) c.conv_channels = j.at("conv_channels").get<int>();
    if (j.contains("conv_kernel")) c.conv_kernel = j.at("conv_kernel").get<int>();
    if (j.contains("conv_stride")) c.conv_stride = j.at("conv_stride").get<int>();
    if (j.contains("conv_padding")) c.conv_padding = j.at("conv_padding").get<int>();
    if (j.contains("gru_layers")) c.gru_layers = j.at("gru_layers").get<int>();
    if (j.contains("gru_units")) c.gru_units = j.at("gru_units").get<int>();
    if (j.contains("attn_hidden")) c.attn_hidden = j.at("attn_hidden").get<int>();
    if (j.contains("image_feat_dim")) c.image_feat_dim = j.at("image_feat_dim").get<int>();
    c.validate();
    return c;
  }
};

// Uniform +-1/sqrt(fan_in) for weights, zeros for biases. Each tensor gets a
// substream derived from its name, so the result does not depend on
// registration order.
template <typename T>
void init_weight(ParamSet<T>& ps, const std::string& name, std::vector<int> shape, int fan_in,
                 const Rng& master) {
  Tensor<T> t(std::move(shape));
  Rng rng = master.derive(fnv1a64(name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  fill_uniform(t, rng, -bound, bound);
  ps.add(name, std::move(t));
}

template <typename T>
void add_gru_params(ParamSet<T>& ps, const std::string& prefix, int d_in, int units,
                    const Rng& master) {
  init_weight(ps, prefix + ".wx", {3 * units, d_in}, d_in, master);
  init_weight(ps, prefix + ".wh_zr", {2 * units, units}, units, master);
  init_weight(ps, prefix + ".wh_h", {units, units}, units, master);
  ps.add(prefix + ".b", Tensor<T>({3 * units}));
}

template <typename T>
ParamSet<T> init_model_params(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamSet<T> ps;
  const Rng master(seed);
  const int J = cfg.joint_dim();
  init_weight(ps, "img.w", {J, cfg.image_feat_dim}, cfg.image_feat_dim, master);
  ps.add("img.b", Tensor<T>({J}));
  init_weight(ps, "cap.conv.k", {cfg.conv_channels, cfg.acoustic_dim, cfg.conv_kernel},
              cfg.acoustic_dim * cfg.conv_kernel, master);
  for (int l = 1; l <= cfg.gru_layers; ++l) {
    const int d_in = l == 1 ? cfg.conv_channels : J;
    add_gru_params(ps, "cap.gru" + std::to_string(l) + ".fwd", d_in, cfg.gru_units, master);
    add_gru_params(ps, "cap.gru" + std::to_string(l) + ".bwd", d_in, cfg.gru_units, master);
  }
  init_weight(ps, "cap.attn.w", {cfg.attn_hidden, J}, J, master);
  ps.add("cap.attn.bw", Tensor<T>({cfg.attn_hidden}));
  init_weight(ps, "cap.attn.v", {J, cfg.attn_hidden}, cfg.attn_hidden, master);
  ps.add("cap.attn.bv", Tensor<T>({J}));
  return ps;
}

// Per-graph node ids for every parameter tensor.
template <typename T>
using ParamNodes = std::map<std::string, typename Graph<T>::Id>;

template <typename T>
ParamNodes<T> load_param_nodes(Graph<T>& g, const ParamSet<T>& ps, bool trainable) {
  ParamNodes<T> ids;
  for (const auto& [name, t] : ps) ids[name] = g.input(t, trainable);
  return ids;
}

// Right-pads variable-length feature matrices into [B, T_max, D].
template <typename T>
Tensor<T> pad_feature_batch(const std::vector<const Tensor<float>*>& feats,
                            std::vector<int>* lengths) {
  if (feats.empty()) throw ValidationError("pad_feature_batch: empty batch");
  int t_max = 0;
  const int d = feats[0]->dim(1);
  for (const auto* f : feats) {
    if (f->rank() != 2 || f->dim(1) != d)
      throw ValidationError("pad_feature_batch: inconsistent feature dims");
    t_max = std::max(t_max, f->dim(0));
  }
  Tensor<T> out({static_cast<int>(feats.size()), t_max, d});
  lengths->clear();
  for (size_t b = 0; b < feats.size(); ++b) {
    const Tensor<float>& f = *feats[b];
    lengths->push_back(f.dim(0));
    for (int t = 0; t < f.dim(0); ++t)
      for (int j = 0; j < d; ++j)
        out.at(static_cast<int>(b), t, j) = static_cast<T>(f.at(t, j));
  }
  return out;
}

template <typename T>
Tensor<T> length_mask(const std::vector<int>& lengths, int t_max) {
  Tensor<T> m({static_cast<int>(lengths.size()), t_max});
  for (size_t b = 0; b < lengths.size(); ++b)
    for (int t = 0; t < lengths[b]; ++t) m.at(static_cast<int>(b), t) = T(1);
  return m;
}

// Intermediate activations exposed for the probing module.
template <typename T>
struct CaptionForward {
  typename Graph<T>::Id embedding;          // [B, joint]
  typename Graph<T>::Id conv_out;           // [B, T', conv_channels]
  std::vector<typename Graph<T>::Id> gru_out;  // per layer, [B, T', joint]
  std::vector<int> out_lengths;             // valid frames after the conv
  Tensor<T> out_mask;                       // [B, T']
};

template <typename T>
GruParamNodes<T> gru_nodes(const ParamNodes<T>& ids, const std::string& prefix) {
  return GruParamNodes<T>{ids.at(prefix + ".wx"), ids.at(prefix + ".wh_zr"),
                          ids.at(prefix + ".wh_h"), ids.at(prefix + ".b")};
}

template <typename T>
typename Graph<T>::Id attention_pool(Graph<T>& g, const ParamNodes<T>& ids,
                                     typename Graph<T>::Id h, const Tensor<T>& mask);

template <typename T>
CaptionForward<T> encode_caption_batch(Graph<T>& g, const ParamNodes<T>& ids,
                                       const EncoderConfig& cfg, const Tensor<T>& features,
                                       const std::vector<int>& lengths) {
  if (features.rank() != 3 || features.dim(2) != cfg.acoustic_dim)
    throw ValidationError("encode_caption: feature dims do not match encoder config");
  for (int len : lengths)
    if (len < 6) throw ValidationError("encode_caption: fewer than 6 valid frames");

  CaptionForward<T> fwd;
  const auto x = g.input(features, false);
  fwd.conv_out = ops::conv1d(g, x, ids.at("cap.conv.k"), cfg.conv_stride, cfg.conv_padding);
  const int t_out = g.val(fwd.conv_out).dim(1);
  for (int len : lengths) fwd.out_lengths.push_back(cfg.conv_out_len(len));
  fwd.out_mask = length_mask<T>(fwd.out_lengths, t_out);

  auto h = fwd.conv_out;
  for (int l = 1; l <= cfg.gru_layers; ++l) {
    const std::string base = "cap.gru" + std::to_string(l);
    const auto hf = gru_layer(g, h, gru_nodes(ids, base + ".fwd"), fwd.out_mask, false);
    const auto hb = gru_layer(g, h, gru_nodes(ids, base + ".bwd"), fwd.out_mask, true);
    h = ops::concat_feat(g, hf, hb);
    fwd.gru_out.push_back(h);
  }

  fwd.embedding = attention_pool(g, ids, h, fwd.out_mask);
  return fwd;
}

// Eq-style attention: scores V tanh(W h_t + b_w) + b_v, softmaxed over time
// per feature, then the weighted sum of hidden states.
template <typename T>
typename Graph<T>::Id attention_pool(Graph<T>& g, const ParamNodes<T>& ids,
                                     typename Graph<T>::Id h, const Tensor<T>& mask) {
  const Tensor<T>& H = g.val(h);
  const int B = H.dim(0), Tn = H.dim(1), D = H.dim(2);
  auto flat = ops::reshape(g, h, {B * Tn, D});
  auto hid = ops::tanh_op(
      g, ops::add_bias(g, ops::matmul_nt(g, flat, ids.at("cap.attn.w")), ids.at("cap.attn.bw")));
  auto scores = ops::add_bias(g, ops::matmul_nt(g, hid, ids.at("cap.attn.v")),
                              ids.at("cap.attn.bv"));
  auto scores3 = ops::reshape(g, scores, {B, Tn, D});
  auto weights = ops::softmax_over_time(g, scores3, mask);
  auto pooled = ops::weighted_time_sum(g, weights, h);
  return ops::l2_normalize_rows(g, pooled);
}

template <typename T>
typename Graph<T>::Id encode_image_batch(Graph<T>& g, const ParamNodes<T>& ids,
                                         const EncoderConfig& cfg, const Tensor<T>& feats) {
  if (feats.rank() != 2 || feats.dim(1) != cfg.image_feat_dim)
    throw ValidationError("encode_image: feature dims do not match encoder config");
  if (!feats.all_finite()) throw ValidationError("encode_image: non-finite input");
  auto x = g.input(feats, false);
  auto proj = ops::add_bias(g, ops::matmul_nt(g, x, ids.at("img.w")), ids.at("img.b"));
  return ops::l2_normalize_rows(g, proj);
}

}  // namespace s2i
