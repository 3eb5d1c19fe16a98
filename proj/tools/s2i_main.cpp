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

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "s2i/config.hpp"
#include "s2i/corpus.hpp"
#include "s2i/probe.hpp"
#include "s2i/toygen.hpp"
#include "s2i/trainer.hpp"
#include "s2i/version.hpp"

namespace fs = std::filesystem;

namespace {

struct SnapshotBundle {
  std::vector<s2i::ParamSet<float>> models;
  s2i::RunConfig config;
  std::string config_hash;
};

// A snapshot is an .s2i parameter file with a .json sidecar next to it that
// records the full run config.
SnapshotBundle load_snapshots(const std::vector<std::string>& paths) {
  if (paths.empty()) throw s2i::ValidationError("no snapshot paths given");
  SnapshotBundle b;
  for (size_t i = 0; i < paths.size(); ++i) {
    b.models.push_back(s2i::load_params<float>(paths[i]));
    fs::path side(paths[i]);
    side.replace_extension(".json");
    std::ifstream is(side);
    if (!is)
      throw s2i::ValidationError("missing snapshot sidecar: " + side.string());
    nlohmann::json j = nlohmann::json::parse(is);
    if (i == 0) {
      b.config = s2i::RunConfig::from_json(j.at("config"));
      b.config_hash = j.at("config_hash").get<std::string>();
    } else if (j.at("config_hash").get<std::string>() != b.config_hash) {
      throw s2i::ValidationError("snapshots come from different configs: " + paths[i]);
    }
  }
  return b;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    const size_t c = s.find(',', pos);
    if (c == std::string::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, c - pos));
    pos = c + 1;
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw s2i::ValidationError("cannot open for write: " + path);
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::string sibling_csv(const std::string& json_path) {
  fs::path p(json_path);
  p.replace_extension(".csv");
  return p.string();
}

int cmd_gen_toy(const s2i::ToyCorpusSpec& spec, const std::string& out_dir) {
  const auto paths = s2i::gen_toy_corpus(spec, out_dir);
  std::cout << "wrote " << paths.manifest << " and " << paths.image_features << " ("
            << spec.n_images << " images x " << spec.captions_per_image << " captions, "
            << spec.n_train() << "/" << spec.n_dev() << "/" << spec.n_test()
            << " train/dev/test images)\n";
  return 0;
}

int cmd_extract(const std::string& manifest_path, const std::string& out_dir, int workers,
                const s2i::FrontendConfig& fe) {
  auto entries = s2i::load_manifest(manifest_path);
  fs::create_directories(fs::path(out_dir) / "features");

  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mu;
  std::vector<s2i::ManifestEntry> out_entries = entries;

  auto work = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= entries.size() || failed.load()) return;
      try {
        auto& e = out_entries[i];
        if (!e.audio_path.empty()) {
          const auto w = s2i::read_wav(s2i::resolve_path(manifest_path, e.audio_path));
          if (w.sample_rate != 16000)
            throw s2i::ValidationError("wav '" + e.audio_path + "' is " +
                                       std::to_string(w.sample_rate) +
                                       " Hz; 16 kHz input is required");
          const auto fm = s2i::extract_features(w, fe);
          const std::string rel = "features/" + e.utterance_id + ".f32m";
          s2i::write_f32m((fs::path(out_dir) / rel).string(), fm.data);
          e.audio_path.clear();
          e.feature_path = rel;
        } else {
          // passthrough: keep precomputed features, re-anchored to the new manifest
          e.feature_path = fs::absolute(s2i::resolve_path(manifest_path, e.feature_path)).string();
        }
      } catch (const std::exception& ex) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!failed.exchange(true)) first_error = ex.what();
      }
    }
  };

  const int n_threads = std::max(1, workers);
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failed) throw s2i::ValidationError(first_error);

  const std::string out_manifest = (fs::path(out_dir) / "manifest.jsonl").string();
  s2i::save_manifest(out_entries, out_manifest);
  std::cout << "extracted features for " << entries.size() << " utterances -> " << out_manifest
            << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  s2i::RunConfig cfg = s2i::RunConfig::from_file(config_path);
  if (cfg.manifest.empty() || cfg.image_features.empty())
    throw s2i::ValidationError("config must set manifest and image_features");
  const std::string manifest = s2i::resolve_path(config_path, cfg.manifest);
  const std::string images = s2i::resolve_path(config_path, cfg.image_features);
  const auto corpus = s2i::load_corpus(manifest, images, cfg.frontend);
  if (corpus.images.matrix.dim(1) != cfg.encoder.image_feat_dim)
    throw s2i::ValidationError(
        "image feature table has " + std::to_string(corpus.images.matrix.dim(1)) +
        " dims but encoder.image_feat_dim is " + std::to_string(cfg.encoder.image_feat_dim));
  const auto& any_split = !corpus.split(s2i::Split::train).empty()
                              ? corpus.split(s2i::Split::train)
                              : corpus.split(s2i::Split::test);
  if (!any_split.empty() && any_split[0].features.dims() != cfg.encoder.acoustic_dim)
    throw s2i::ValidationError(
        "corpus features have " + std::to_string(any_split[0].features.dims()) +
        " dims but encoder.acoustic_dim is " + std::to_string(cfg.encoder.acoustic_dim) +
        "; set encoder.acoustic_dim in the config");

  fs::create_directories(out_dir);
  const std::string hash = cfg.hash();
  nlohmann::ordered_json record;
  record["config"] = cfg.to_json();
  record["config_hash"] = hash;
  record["version"] = s2i::kVersion;
  write_text((fs::path(out_dir) / "config.json").string(), record.dump(2) + "\n");

  const auto snapshots =
      s2i::train<float>(corpus, cfg.encoder, cfg.loss, cfg.train, out_dir, cfg.to_json(), hash);
  for (const auto& s : snapshots)
    std::cout << "epoch " << s.epoch << ": dev c2i R@1/5/10 = " << s.dev_c2i.r_at_1 << "/"
              << s.dev_c2i.r_at_5 << "/" << s.dev_c2i.r_at_10 << "  -> " << s.params_path
              << "\n";
  const auto best = s2i::select_ensemble(snapshots);
  std::cout << "ensemble pick:";
  for (size_t i : best) std::cout << " epoch " << snapshots[i].epoch;
  std::cout << "\n";
  return 0;
}

int cmd_evaluate(const std::string& snapshots_arg, const std::string& manifest_path,
                 const std::string& split_name, const std::string& out_path,
                 const std::string& image_features_path) {
  const auto paths = split_commas(snapshots_arg);
  if (paths.size() > 2)
    throw s2i::ValidationError("evaluate takes one or two snapshots");
  auto bundle = load_snapshots(paths);
  const s2i::Split split = s2i::parse_split(split_name);
  const std::string images =
      image_features_path.empty()
          ? s2i::resolve_path(manifest_path, bundle.config.image_features)
          : image_features_path;
  const auto corpus = s2i::load_corpus(manifest_path, images, bundle.config.frontend);
  const auto& items = corpus.split(split);
  if (items.empty())
    throw s2i::ValidationError(std::string("split '") + split_name + "' is empty");

  std::vector<const s2i::ParamSet<float>*> models;
  for (const auto& m : bundle.models) models.push_back(&m);
  const auto enc =
      s2i::encode_split_ensemble(models, bundle.config.encoder, items, corpus.images.matrix);
  const auto c2i = s2i::summarize(
      s2i::rank_caption_to_image(enc.cap_embs, enc.img_embs, enc.view.caption_to_image),
      "caption_to_image");
  const auto i2c = s2i::summarize(
      s2i::rank_image_to_caption(enc.img_embs, enc.cap_embs, enc.view.image_to_captions),
      "image_to_caption");

  nlohmann::ordered_json report;
  report["version"] = s2i::kVersion;
  report["config_hash"] = bundle.config_hash;
  report["split"] = split_name;
  report["snapshots"] = paths;
  report["n_captions"] = static_cast<int>(items.size());
  report["n_images"] = static_cast<int>(enc.view.image_rows.size());
  report["caption_to_image"] = c2i.to_json();
  report["image_to_caption"] = i2c.to_json();
  write_text(out_path, report.dump(2) + "\n");
  write_text(sibling_csv(out_path), s2i::retrieval_csv({c2i, i2c}));

  std::cout << "caption->image R@1/5/10 = " << c2i.r_at_1 << "/" << c2i.r_at_5 << "/"
            << c2i.r_at_10 << ", med r " << c2i.median_rank << "\n";
  std::cout << "image->caption R@1/5/10 = " << i2c.r_at_1 << "/" << i2c.r_at_5 << "/"
            << i2c.r_at_10 << ", med r " << i2c.median_rank << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_probe(const std::string& snapshot_path, const std::string& layer_name,
              const std::string& manifest_path, const std::string& out_path,
              const std::string& image_features_path, const s2i::ProbeTrainConfig& pcfg) {
  auto bundle = load_snapshots({snapshot_path});
  const s2i::ProbeLayer layer = s2i::parse_probe_layer(layer_name);
  const std::string images =
      image_features_path.empty()
          ? s2i::resolve_path(manifest_path, bundle.config.image_features)
          : image_features_path;
  const auto corpus = s2i::load_corpus(manifest_path, images, bundle.config.frontend);
  const auto& train_items = corpus.split(s2i::Split::train);
  const auto& test_items = corpus.split(s2i::Split::test);
  if (train_items.empty() || test_items.empty())
    throw s2i::ValidationError("probe needs nonempty train and test splits");

  std::vector<std::string> all_captions;
  for (const auto& split : corpus.items)
    for (const auto& item : split) all_captions.push_back(item.caption_text);
  const auto vocab = s2i::build_vocabulary(all_captions);
  if (vocab.size() == 0)
    throw s2i::ValidationError("vocabulary filter kept no words");

  auto captions_of = [](const std::vector<s2i::CorpusItem>& items) {
    std::vector<std::string> caps;
    for (const auto& it : items) caps.push_back(it.caption_text);
    return caps;
  };

  const auto& model = bundle.models[0];
  const auto& enc_cfg = bundle.config.encoder;
  const auto train_reps = s2i::layer_representations(model, enc_cfg, train_items, layer);
  const auto test_reps = s2i::layer_representations(model, enc_cfg, test_items, layer);
  const auto train_targets = s2i::presence_targets(captions_of(train_items), vocab);
  const auto test_targets = s2i::presence_targets(captions_of(test_items), vocab);

  const auto probe = s2i::train_probe(train_reps, train_targets, pcfg);
  const auto rep = s2i::evaluate_probe(probe, test_reps, test_targets, layer_name);

  nlohmann::ordered_json report;
  report["version"] = s2i::kVersion;
  report["config_hash"] = bundle.config_hash;
  report["snapshot"] = snapshot_path;
  nlohmann::ordered_json body = rep.to_json();
  for (auto it = body.begin(); it != body.end(); ++it) report[it.key()] = it.value();
  report["vocabulary"] = vocab.to_json();
  write_text(out_path, report.dump(2) + "\n");
  write_text(sibling_csv(out_path), rep.curve_csv());

  std::cout << "layer " << layer_name << ": AUC " << rep.auc << ", max F1 " << rep.max_f1()
            << " over " << rep.n_sentences << " test sentences, vocab " << rep.vocab_size
            << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speech-image joint embedding trainer and layer prober"};
  app.require_subcommand(1);
  app.set_version_flag("--version", s2i::kVersion);

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "generate a deterministic synthetic toy corpus");
  s2i::ToyCorpusSpec spec;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--images", spec.n_images, "number of images");
  gen->add_option("--vocab", spec.vocab_size, "vocabulary size");
  gen->add_option("--seed", spec.seed, "generation seed");
  gen->add_option("--captions-per-image", spec.captions_per_image, "captions per image");
  gen->add_option("--min-words", spec.caption_len_min, "minimum caption length");
  gen->add_option("--max-words", spec.caption_len_max, "maximum caption length");
  gen->add_option("--sample-rate", spec.sample_rate, "audio sample rate");
  gen->add_option("--image-feat-dim", spec.image_feat_dim, "image feature dimensionality");

  // extract
  auto* ext = app.add_subcommand("extract", "compute acoustic features for a manifest");
  std::string ext_manifest, ext_out;
  int ext_workers = 1;
  bool ext_cmvn = false;
  ext->add_option("--manifest", ext_manifest, "input manifest")->required();
  ext->add_option("--out", ext_out, "output directory")->required();
  ext->add_option("--workers", ext_workers, "concurrent extraction workers");
  ext->add_flag("--cmvn", ext_cmvn, "per-utterance cepstral mean/variance normalization");

  // train
  auto* tr = app.add_subcommand("train", "train the joint embedding model");
  std::string tr_config, tr_out;
  tr->add_option("--config", tr_config, "run config JSON")->required();
  tr->add_option("--out", tr_out, "output directory")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "retrieval metrics for one or two snapshots");
  std::string ev_snapshots, ev_manifest, ev_split = "test", ev_out, ev_images;
  ev->add_option("--snapshots", ev_snapshots, "snapshot file(s), comma separated (two = ensemble)")
      ->required();
  ev->add_option("--manifest", ev_manifest, "manifest")->required();
  ev->add_option("--split", ev_split, "split to evaluate (train|dev|test)");
  ev->add_option("--out", ev_out, "report JSON path")->required();
  ev->add_option("--image-features", ev_images, "image feature table (default: from config)");

  // probe
  auto* pr = app.add_subcommand("probe", "word presence probe on an encoder layer");
  std::string pr_snapshot, pr_layer, pr_manifest, pr_out, pr_images;
  s2i::ProbeTrainConfig pcfg;
  pr->add_option("--snapshot", pr_snapshot, "snapshot file")->required();
  pr->add_option("--layer", pr_layer, "input|gru1|gru2|gru3|attention")->required();
  pr->add_option("--manifest", pr_manifest, "manifest")->required();
  pr->add_option("--out", pr_out, "report JSON path")->required();
  pr->add_option("--image-features", pr_images, "image feature table (default: from config)");
  pr->add_option("--probe-epochs", pcfg.epochs, "probe training epochs");
  pr->add_option("--probe-lr", pcfg.lr, "probe learning rate");
  pr->add_option("--probe-seed", pcfg.seed, "probe training seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_toy(spec, gen_out);
    if (ext->parsed()) {
      s2i::FrontendConfig fe;
      fe.cmvn = ext_cmvn;
      return cmd_extract(ext_manifest, ext_out, ext_workers, fe);
    }
    if (tr->parsed()) return cmd_train(tr_config, tr_out);
    if (ev->parsed())
      return cmd_evaluate(ev_snapshots, ev_manifest, ev_split, ev_out, ev_images);
    if (pr->parsed())
      return cmd_probe(pr_snapshot, pr_layer, pr_manifest, pr_out, pr_images, pcfg);
    std::cerr << app.help() << "\n";
    return 1;
  } catch (const s2i::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}
