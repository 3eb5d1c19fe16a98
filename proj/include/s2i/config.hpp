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

#include <fstream>
#include <string>

#include <json.hpp>

#include "s2i/encoder.hpp"
#include "s2i/frontend.hpp"
#include "s2i/loss.hpp"
#include "s2i/trainer.hpp"

namespace s2i {

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ValidationError(where + ": unknown key '" + it.key() + "'");
}

}  // namespace detail

inline nlohmann::ordered_json train_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["snapshot_every"] = c.snapshot_every;
  j["lr_min"] = c.lr_min;
  j["lr_max"] = c.lr_max;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["eps"] = c.adam.eps;
  j["grad_clip"] = c.grad_clip;
  return j;
}

inline TrainConfig train_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"epochs", "snapshot_every", "lr_min", "lr_max", "batch_size", "seed",
                          "beta1", "beta2", "eps", "grad_clip"},
                         "train config");
  TrainConfig c;
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("snapshot_every")) c.snapshot_every = j.at("snapshot_every").get<int>();
  if (j.contains("lr_min")) c.lr_min = j.at("lr_min").get<double>();
  if (j.contains("lr_max")) c.lr_max = j.at("lr_max").get<double>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("beta1")) c.adam.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) c.adam.beta2 = j.at("beta2").get<double>();
  if (j.contains("eps")) c.adam.eps = j.at("eps").get<double>();
  if (j.contains("grad_clip")) c.grad_clip = j.at("grad_clip").get<double>();
  c.validate();
  return c;
}

inline nlohmann::ordered_json loss_to_json(const LossConfig& c) {
  nlohmann::ordered_json j;
  j["margin"] = c.margin;
  j["hard_fraction"] = c.hard_fraction;
  return j;
}

inline LossConfig loss_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"margin", "hard_fraction"}, "loss config");
  LossConfig c;
  if (j.contains("margin")) c.margin = j.at("margin").get<double>();
  if (j.contains("hard_fraction")) c.hard_fraction = j.at("hard_fraction").get<double>();
  c.validate();
  return c;
}

inline nlohmann::ordered_json frontend_to_json(const FrontendConfig& c) {
  nlohmann::ordered_json j;
  j["win_len_ms"] = c.win_len_ms;
  j["win_shift_ms"] = c.win_shift_ms;
  j["n_mel"] = c.n_mel;
  j["n_cepstra"] = c.n_cepstra;
  j["include_log_energy"] = c.include_log_energy;
  j["delta_order"] = c.delta_order;
  j["fft_size"] = c.fft_size;
  j["preemphasis"] = c.preemphasis;
  j["cmvn"] = c.cmvn;
  return j;
}

inline FrontendConfig frontend_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"win_len_ms", "win_shift_ms", "n_mel", "n_cepstra",
                          "include_log_energy", "delta_order", "fft_size", "preemphasis",
                          "cmvn"},
                         "frontend config");
  FrontendConfig c;
  if (j.contains("win_len_ms")) c.win_len_ms = j.at("win_len_ms").get<double>();
  if (j.contains("win_shift_ms")) c.win_shift_ms = j.at("win_shift_ms").get<double>();
  if (j.contains("n_mel")) c.n_mel = j.at("n_mel").get<int>();
  if (j.contains("n_cepstra")) c.n_cepstra = j.at("n_cepstra").get<int>();
  if (j.contains("include_log_energy"))
    c.include_log_energy = j.at("include_log_energy").get<bool>();
  if (j.contains("delta_order")) c.delta_order = j.at("delta_order").get<int>();
  if (j.contains("fft_size")) c.fft_size = j.at("fft_size").get<int>();
  if (j.contains("preemphasis")) c.preemphasis = j.at("preemphasis").get<double>();
  if (j.contains("cmvn")) c.cmvn = j.at("cmvn").get<bool>();
  return c;
}

// The one JSON document driving a training run. Unknown keys anywhere are
// rejected; the hash is over the fully resolved document with sorted keys,
// so it does not depend on key order in the input file.
struct RunConfig {
  std::string manifest;
  std::string image_features;
  std::string preset = "paper";
  EncoderConfig encoder = EncoderConfig::paper();
  TrainConfig train;
  LossConfig loss;
  FrontendConfig frontend;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["manifest"] = manifest;
    j["image_features"] = image_features;
    j["preset"] = preset;
    j["encoder"] = encoder.to_json();
    j["train"] = train_to_json(train);
    j["loss"] = loss_to_json(loss);
    j["frontend"] = frontend_to_json(frontend);
    return j;
  }

  std::string hash() const {
    const nlohmann::json sorted = to_json();  // plain json sorts keys
    return to_hex(fnv1a64(sorted.dump()));
  }

  static RunConfig from_json(const nlohmann::json& j) {
    detail::reject_unknown(
        j, {"manifest", "image_features", "preset", "encoder", "train", "loss", "frontend"},
        "run config");
    RunConfig c;
    if (j.contains("manifest")) c.manifest = j.at("manifest").get<std::string>();
    if (j.contains("image_features"))
      c.image_features = j.at("image_features").get<std::string>();
    if (j.contains("preset")) c.preset = j.at("preset").get<std::string>();
    c.encoder = EncoderConfig::preset(c.preset);
    if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j.at("encoder"), c.encoder);
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    if (j.contains("loss")) c.loss = loss_from_json(j.at("loss"));
    if (j.contains("frontend")) c.frontend = frontend_from_json(j.at("frontend"));
    return c;
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open config: " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config " + path + ": " + e.what());
    }
    return from_json(j);
  }
};

}  // namespace s2i
