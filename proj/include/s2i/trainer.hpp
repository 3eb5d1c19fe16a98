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

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2i/corpus.hpp"
#include "s2i/encoder.hpp"
#include "s2i/loss.hpp"
#include "s2i/optimizer.hpp"
#include "s2i/retrieval.hpp"
#include "s2i/version.hpp"

namespace s2i {

struct TrainConfig {
  int epochs = 32;
  int snapshot_every = 4;
  double lr_min = 1e-6;
  double lr_max = 2e-4;
  int batch_size = 32;
  std::uint64_t seed = 42;
  AdamConfig adam;
  double grad_clip = 0.0;  // 0 disables clipping

  void validate() const {
    if (epochs <= 0 || snapshot_every <= 0 || epochs % snapshot_every != 0)
      throw ValidationError("train: snapshot_every must divide epochs");
    if (!(lr_min < lr_max)) throw ValidationError("train: need lr_min < lr_max");
    if (batch_size < 2) throw ValidationError("train: batch_size must be at least 2");
  }
};

struct Snapshot {
  std::string params_path;
  int epoch = 0;
  RetrievalReport dev_c2i;
  RetrievalReport dev_i2c;

  double dev_selector() const { return dev_c2i.recall_sum(); }
};

// --- shared encoding helpers -------------------------------------------------

template <typename T>
Tensor<T> gather_image_rows(const Tensor<float>& table, const std::vector<int>& rows) {
  Tensor<T> out({static_cast<int>(rows.size()), table.dim(1)});
  for (size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < table.dim(1); ++j)
      out.at(static_cast<int>(i), j) = static_cast<T>(table.at(rows[i], j));
  return out;
}

// Encodes all captions of a split (chunked) and the split's image gallery;
// read-only over the parameters.
template <typename T>
struct EncodedSplit {
  Tensor<T> cap_embs;  // [n_captions, joint]
  Tensor<T> img_embs;  // [n_gallery, joint]
  SplitView view;
};

template <typename T>
EncodedSplit<T> encode_split(const ParamSet<T>& params, const EncoderConfig& cfg,
                             const std::vector<CorpusItem>& items,
                             const Tensor<float>& image_table, int chunk = 64) {
  if (items.empty()) throw ValidationError("encode_split: empty split");
  EncodedSplit<T> out;
  out.view = make_split_view(items);
  out.cap_embs = Tensor<T>({static_cast<int>(items.size()), cfg.joint_dim()});
  for (size_t base = 0; base < items.size(); base += static_cast<size_t>(chunk)) {
    const size_t end = std::min(items.size(), base + static_cast<size_t>(chunk));
    std::vector<const Tensor<float>*> feats;
    for (size_t i = base; i < end; ++i) feats.push_back(&items[i].features.data);
    std::vector<int> lengths;
    Tensor<T> padded = pad_feature_batch<T>(feats, &lengths);
    Graph<T> g;
    auto ids = load_param_nodes(g, params, false);
    auto fwd = encode_caption_batch(g, ids, cfg, padded, lengths);
    const Tensor<T>& emb = g.val(fwd.embedding);
    for (size_t i = base; i < end; ++i)
      for (int j = 0; j < cfg.joint_dim(); ++j)
        out.cap_embs.at(static_cast<int>(i), j) = emb.at(static_cast<int>(i - base), j);
  }
  {
    Graph<T> g;
    auto ids = load_param_nodes(g, params, false);
    auto img = encode_image_batch(g, ids, cfg, gather_image_rows<T>(image_table, out.view.image_rows));
    out.img_embs = g.val(img);
  }
  return out;
}

template <typename T>
std::pair<RetrievalReport, RetrievalReport> eval_split(const ParamSet<T>& params,
                                                       const EncoderConfig& cfg,
                                                       const std::vector<CorpusItem>& items,
                                                       const Tensor<float>& image_table) {
  const auto enc = encode_split(params, cfg, items, image_table);
  const auto c2i = summarize(
      rank_caption_to_image(enc.cap_embs, enc.img_embs, enc.view.caption_to_image),
      "caption_to_image");
  const auto i2c = summarize(
      rank_image_to_caption(enc.img_embs, enc.cap_embs, enc.view.image_to_captions),
      "image_to_caption");
  return {c2i, i2c};
}

// --- training loop -----------------------------------------------------------

// One optimization step on a caption/image index batch; returns the loss.
template <typename T>
double train_step(ParamSet<T>& params, Adam<T>& adam, const EncoderConfig& cfg,
                  const LossConfig& loss_cfg, const std::vector<CorpusItem>& items,
                  const std::vector<int>& batch, const Tensor<float>& image_table, double lr,
                  double grad_clip) {
  Graph<T> g;
  auto ids = load_param_nodes(g, params, true);

  std::vector<const Tensor<float>*> feats;
  std::vector<int> rows;
  for (int idx : batch) {
    feats.push_back(&items[static_cast<size_t>(idx)].features.data);
    rows.push_back(items[static_cast<size_t>(idx)].image_row);
  }
  std::vector<int> lengths;
  Tensor<T> padded = pad_feature_batch<T>(feats, &lengths);
  auto cap = encode_caption_batch(g, ids, cfg, padded, lengths);
  auto img = encode_image_batch(g, ids, cfg, gather_image_rows<T>(image_table, rows));
  auto sims = ops::matmul_nt(g, cap.embedding, img);
  auto loss = hinge_rank_loss(g, sims, loss_cfg);
  const double loss_value = static_cast<double>(g.val(loss).v[0]);
  if (!std::isfinite(loss_value))
    throw std::runtime_error("train: loss diverged (non-finite)");

  g.backward(loss);
  std::map<std::string, Tensor<T>> grads;
  for (const auto& [name, id] : ids) grads.emplace(name, g.grad(id));
  clip_grad_norm(grads, grad_clip);
  adam.step(params, grads, lr);
  return loss_value;
}

// Epoch shuffling is seeded per epoch; the whole loop is single-threaded, so
// identical config and seed reproduce identical parameters bit for bit.
template <typename T>
std::vector<Snapshot> train(const LoadedCorpus& corpus, const EncoderConfig& enc_cfg,
                            const LossConfig& loss_cfg, const TrainConfig& tc,
                            const std::string& out_dir,
                            const nlohmann::ordered_json& config_record,
                            const std::string& config_hash) {
  namespace fs = std::filesystem;
  tc.validate();
  loss_cfg.validate();
  const auto& train_items = corpus.split(Split::train);
  const auto& dev_items = corpus.split(Split::dev);
  if (train_items.empty() || dev_items.empty())
    throw ValidationError("train: train and dev splits must be nonempty");
  fs::create_directories(out_dir);

  ParamSet<T> params = init_model_params<T>(enc_cfg, tc.seed);
  Adam<T> adam(tc.adam);

  const int n = static_cast<int>(train_items.size());
  int steps_per_epoch = n / tc.batch_size;
  if (n % tc.batch_size >= 2) ++steps_per_epoch;
  if (steps_per_epoch == 0)
    throw ValidationError("train: fewer than one batch of training captions");
  const long steps_per_cycle = static_cast<long>(tc.snapshot_every) * steps_per_epoch;

  std::ofstream log(fs::path(out_dir) / "train_log.jsonl");
  if (!log) throw ValidationError("cannot open training log in " + out_dir);

  std::vector<Snapshot> snapshots;
  const Rng master(tc.seed);
  long global_step = 0;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    Rng shuffle_rng = master.derive(0xE70C0000ull + static_cast<std::uint64_t>(epoch));
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);

    double loss_sum = 0;
    int batches = 0;
    double lr = 0;
    for (int b = 0; b < steps_per_epoch; ++b) {
      const int lo = b * tc.batch_size;
      const int hi = std::min(n, lo + tc.batch_size);
      std::vector<int> batch(order.begin() + lo, order.begin() + hi);
      // last step of each cycle lands exactly on lr_min, where snapshots are taken
      const double frac = static_cast<double>(global_step % steps_per_cycle + 1) /
                          static_cast<double>(steps_per_cycle);
      lr = cyclic_lr_frac(frac, tc.lr_min, tc.lr_max);
      loss_sum += train_step(params, adam, enc_cfg, loss_cfg, train_items, batch,
                             corpus.images.matrix, lr, tc.grad_clip);
      ++global_step;
      ++batches;
    }

    const auto [dev_c2i, dev_i2c] = eval_split(params, enc_cfg, dev_items, corpus.images.matrix);

    nlohmann::ordered_json line;
    line["epoch"] = epoch;
    line["loss"] = loss_sum / batches;
    line["lr"] = lr;
    line["dev"] = {{"caption_to_image", dev_c2i.to_json()},
                   {"image_to_caption", dev_i2c.to_json()}};
    line["config_hash"] = config_hash;
    line["version"] = kVersion;
    log << line.dump() << "\n";
    log.flush();

    if (epoch % tc.snapshot_every == 0) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "snapshot_ep%03d", epoch);
      Snapshot snap;
      snap.epoch = epoch;
      snap.dev_c2i = dev_c2i;
      snap.dev_i2c = dev_i2c;
      snap.params_path = (fs::path(out_dir) / (std::string(stem) + ".s2i")).string();
      save_params(params, snap.params_path);
      nlohmann::ordered_json side;
      side["epoch"] = epoch;
      side["dev"] = {{"caption_to_image", dev_c2i.to_json()},
                     {"image_to_caption", dev_i2c.to_json()}};
      side["config_hash"] = config_hash;
      side["version"] = kVersion;
      side["config"] = config_record;
      std::ofstream ss(fs::path(out_dir) / (std::string(stem) + ".json"));
      ss << side.dump(2) << "\n";
      snapshots.push_back(std::move(snap));
    }
  }
  return snapshots;
}

// --- snapshot ensembling -----------------------------------------------------

// Indices of the (up to two) snapshots with the best dev selector; ties go
// to the earlier epoch.
inline std::vector<size_t> select_ensemble(const std::vector<Snapshot>& snapshots) {
  if (snapshots.empty()) throw ValidationError("ensemble: need at least one snapshot");
  std::vector<size_t> idx(snapshots.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return snapshots[a].dev_selector() > snapshots[b].dev_selector();
  });
  if (idx.size() > 2) idx.resize(2);
  return idx;
}

// The ensemble embedding of an item is the elementwise sum of per-snapshot
// embeddings; cosine ranking is scale invariant, so no renormalization.
template <typename T>
EncodedSplit<T> encode_split_ensemble(const std::vector<const ParamSet<T>*>& models,
                                      const EncoderConfig& cfg,
                                      const std::vector<CorpusItem>& items,
                                      const Tensor<float>& image_table) {
  if (models.empty()) throw ValidationError("ensemble: need at least one model");
  EncodedSplit<T> acc = encode_split(*models[0], cfg, items, image_table);
  for (size_t m = 1; m < models.size(); ++m) {
    const EncodedSplit<T> next = encode_split(*models[m], cfg, items, image_table);
    for (size_t i = 0; i < acc.cap_embs.v.size(); ++i) acc.cap_embs.v[i] += next.cap_embs.v[i];
    for (size_t i = 0; i < acc.img_embs.v.size(); ++i) acc.img_embs.v[i] += next.img_embs.v[i];
  }
  return acc;
}

}  // namespace s2i
