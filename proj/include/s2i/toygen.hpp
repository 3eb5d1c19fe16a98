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

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "s2i/corpus.hpp"
#include "s2i/wav.hpp"

namespace s2i {

// Desk-scale synthetic corpus. Every vocabulary word is a 250 ms tone burst
// at f_w = 300 + 40*w Hz (plus low-amplitude seeded noise); a caption is the
// concatenation of its words' bursts. An image's feature vector is a fixed
// seeded random projection of its bag-of-words indicator, so caption-image
// correspondence is learnable. Output is a pure function of the spec.
struct ToyCorpusSpec {
  int n_images = 200;
  int vocab_size = 20;
  int caption_len_min = 3;
  int caption_len_max = 6;
  int captions_per_image = 5;
  int sample_rate = 16000;
  std::uint64_t seed = 1;
  int image_feat_dim = 64;

  static constexpr double kToneBase = 300.0;
  static constexpr double kToneStep = 40.0;
  static constexpr double kToneSeconds = 0.25;

  double word_freq(int w) const { return kToneBase + kToneStep * w; }

  void validate() const {
    if (n_images <= 0 || vocab_size <= 0 || captions_per_image <= 0 || image_feat_dim <= 0)
      throw ValidationError("toy spec: counts must be positive");
    if (caption_len_min <= 0 || caption_len_min > caption_len_max)
      throw ValidationError("toy spec: need 0 < len_min <= len_max");
    if (caption_len_max > vocab_size)
      throw ValidationError("toy spec: caption length exceeds vocabulary size");
    if (sample_rate <= 0) throw ValidationError("toy spec: bad sample rate");
    if (word_freq(vocab_size - 1) >= sample_rate / 2.0)
      throw ValidationError(
          "toy spec: vocabulary too large, top word frequency reaches Nyquist (" +
          std::to_string(word_freq(vocab_size - 1)) + " Hz at " +
          std::to_string(sample_rate) + " Hz)");
  }

  // Split policy: half the images are held out as test so the retrieval
  // gallery is large, a tenth is dev for snapshot selection, the rest train.
  int n_test() const { return n_images / 2; }
  int n_dev() const { return std::max(1, n_images / 10); }
  int n_train() const { return n_images - n_test() - n_dev(); }
};

namespace detail {

inline std::string toy_word(int w) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "word%02d", w);
  return buf;
}

inline std::string toy_image_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "img%05d", i);
  return buf;
}

}  // namespace detail

struct ToyCorpusPaths {
  std::string manifest;
  std::string image_features;
};

inline ToyCorpusPaths gen_toy_corpus(const ToyCorpusSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  spec.validate();
  fs::create_directories(fs::path(out_dir) / "audio");

  const Rng master(spec.seed);
  const int n_tone = static_cast<int>(spec.sample_rate * ToyCorpusSpec::kToneSeconds);
  const int ramp = spec.sample_rate / 100;  // 10 ms fade against clicks

  // Fixed projection of the bag-of-words indicator.
  Rng proj_rng = master.derive(0x1000);
  Tensor<float> proj({spec.image_feat_dim, spec.vocab_size});
  for (auto& x : proj.v) x = static_cast<float>(proj_rng.normal());

  Tensor<float> image_features({spec.n_images, spec.image_feat_dim});
  std::vector<ManifestEntry> entries;

  for (int img = 0; img < spec.n_images; ++img) {
    Rng img_rng = master.derive(0x2000 + static_cast<std::uint64_t>(img));
    const int len =
        static_cast<int>(img_rng.uniform_int(spec.caption_len_min, spec.caption_len_max));
    // distinct words per image (partial Fisher-Yates)
    std::vector<int> all(static_cast<size_t>(spec.vocab_size));
    for (int w = 0; w < spec.vocab_size; ++w) all[static_cast<size_t>(w)] = w;
    for (int i = 0; i < len; ++i) {
      const int j = static_cast<int>(img_rng.uniform_int(i, spec.vocab_size - 1));
      std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(j)]);
    }
    std::vector<int> words(all.begin(), all.begin() + len);

    for (int w : words)
      for (int d = 0; d < spec.image_feat_dim; ++d)
        image_features.at(img, d) += proj.at(d, w);

    Split split;
    if (img < spec.n_train())
      split = Split::train;
    else if (img < spec.n_train() + spec.n_dev())
      split = Split::dev;
    else
      split = Split::test;

    for (int cap = 0; cap < spec.captions_per_image; ++cap) {
      Rng cap_rng = img_rng.derive(0x3000 + static_cast<std::uint64_t>(cap));
      std::vector<int> order = words;
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1],
                  order[static_cast<size_t>(cap_rng.uniform_int(0, static_cast<int>(i) - 1))]);

      std::vector<float> audio;
      audio.reserve(order.size() * static_cast<size_t>(n_tone));
      std::string text;
      for (int w : order) {
        if (!text.empty()) text += ' ';
        text += detail::toy_word(w);
        const double freq = spec.word_freq(w);
        const double amp = cap_rng.uniform(0.25, 0.45);
        const double phase = cap_rng.uniform(0.0, 2.0 * M_PI);
        for (int t = 0; t < n_tone; ++t) {
          double env = 1.0;
          if (t < ramp) env = static_cast<double>(t) / ramp;
          if (t >= n_tone - ramp) env = static_cast<double>(n_tone - 1 - t) / ramp;
          const double tone =
              amp * env * std::sin(2.0 * M_PI * freq * t / spec.sample_rate + phase);
          const double noise = 0.02 * cap_rng.normal();
          audio.push_back(static_cast<float>(tone + noise));
        }
      }

      ManifestEntry e;
      e.utterance_id = detail::toy_image_id(img) + "_c" + std::to_string(cap);
      e.image_id = detail::toy_image_id(img);
      e.audio_path = "audio/" + e.utterance_id + ".wav";
      e.image_feature_ref = img;
      e.caption_text = text;
      e.split = split;
      write_wav((fs::path(out_dir) / e.audio_path).string(), audio, spec.sample_rate);
      entries.push_back(std::move(e));
    }
  }

  ToyCorpusPaths paths;
  paths.manifest = (fs::path(out_dir) / "manifest.jsonl").string();
  paths.image_features = (fs::path(out_dir) / "images.f32m").string();
  save_manifest(entries, paths.manifest);
  write_f32m(paths.image_features, image_features);
  return paths;
}

}  // namespace s2i
