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
#include <bit>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2i/frontend.hpp"
#include "s2i/tensor.hpp"

namespace s2i {

enum class Split { train, dev, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split: '" + s + "'");
}

// One caption. Exactly one of audio_path / feature_path is set; paths are
// interpreted relative to the manifest file's directory unless absolute.
struct ManifestEntry {
  std::string utterance_id;
  std::string image_id;
  std::string audio_path;
  std::string feature_path;
  int image_feature_ref = -1;
  std::string caption_text;
  Split split = Split::train;
};

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::map<std::string, Split> image_split;
  std::map<std::string, int> image_ref;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
    static const std::vector<std::string> known = {
        "utterance_id", "image_id",      "audio_path", "feature_path",
        "image_feature_ref", "caption_text", "split"};
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find(known.begin(), known.end(), it.key()) == known.end())
        throw ValidationError(where + ": unknown field '" + it.key() + "'");
    ManifestEntry e;
    try {
      e.utterance_id = j.at("utterance_id").get<std::string>();
      e.image_id = j.at("image_id").get<std::string>();
      e.image_feature_ref = j.at("image_feature_ref").get<int>();
      e.caption_text = j.at("caption_text").get<std::string>();
      e.split = parse_split(j.at("split").get<std::string>());
      if (j.contains("audio_path")) e.audio_path = j.at("audio_path").get<std::string>();
      if (j.contains("feature_path")) e.feature_path = j.at("feature_path").get<std::string>();
    } catch (const ValidationError& ve) {
      throw ValidationError(where + ": " + ve.what());
    } catch (const nlohmann::json::exception& je) {
      throw ValidationError(where + ": " + je.what());
    }
    if (e.audio_path.empty() == e.feature_path.empty())
      throw ValidationError(where + ": exactly one of audio_path/feature_path must be set");
    if (e.image_feature_ref < 0)
      throw ValidationError(where + ": image_feature_ref must be >= 0");
    auto [sit, snew] = image_split.emplace(e.image_id, e.split);
    if (!snew && sit->second != e.split)
      throw ValidationError(where + ": image '" + e.image_id + "' appears in two splits");
    auto [rit, rnew] = image_ref.emplace(e.image_id, e.image_feature_ref);
    if (!rnew && rit->second != e.image_feature_ref)
      throw ValidationError(where + ": image '" + e.image_id +
                            "' maps to two feature rows");
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for write: " + path);
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["utterance_id"] = e.utterance_id;
    j["image_id"] = e.image_id;
    if (!e.audio_path.empty()) j["audio_path"] = e.audio_path;
    if (!e.feature_path.empty()) j["feature_path"] = e.feature_path;
    j["image_feature_ref"] = e.image_feature_ref;
    j["caption_text"] = e.caption_text;
    j["split"] = split_name(e.split);
    os << j.dump() << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

// F32M: "F32M" magic, u32 LE rows, u32 LE cols, rows*cols float32 LE
// row-major.
inline void write_f32m(const std::string& path, const Tensor<float>& m) {
  if (m.rank() != 2) throw ValidationError("write_f32m: want a matrix");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open for write: " + path);
  os.write("F32M", 4);
  detail::write_u32(os, static_cast<std::uint32_t>(m.dim(0)));
  detail::write_u32(os, static_cast<std::uint32_t>(m.dim(1)));
  for (float x : m.v) detail::write_f32(os, x);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Tensor<float> read_f32m(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "F32M", 4) != 0)
    throw ValidationError("not an F32M file: " + path);
  const std::uint32_t rows = detail::read_u32(is);
  const std::uint32_t cols = detail::read_u32(is);
  if (rows == 0 || cols == 0) throw ValidationError("F32M with empty dimensions: " + path);
  Tensor<float> m({static_cast<int>(rows), static_cast<int>(cols)});
  is.read(reinterpret_cast<char*>(m.v.data()),
          static_cast<std::streamsize>(m.v.size() * sizeof(float)));
  if (is.gcount() != static_cast<std::streamsize>(m.v.size() * sizeof(float)))
    throw ValidationError("truncated F32M payload: " + path);
  char extra;
  if (is.read(&extra, 1))
    throw ValidationError("trailing bytes after F32M payload: " + path);
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& x : m.v) {
      std::uint32_t b;
      std::memcpy(&b, &x, 4);
      b = __builtin_bswap32(b);
      std::memcpy(&x, &b, 4);
    }
  }
  for (float x : m.v)
    if (!std::isfinite(x)) throw ValidationError("non-finite value in F32M file: " + path);
  return m;
}

struct ImageFeatureTable {
  Tensor<float> matrix;              // [rows, dims]
  std::vector<std::string> row_ids;  // filled when cross-checked with a manifest
};

inline ImageFeatureTable load_image_features(const std::string& path) {
  ImageFeatureTable t;
  t.matrix = read_f32m(path);
  return t;
}

// Validates every image_feature_ref and fills row_ids; two images may not
// share a row.
inline void bind_image_ids(ImageFeatureTable& table, const std::vector<ManifestEntry>& entries) {
  table.row_ids.assign(static_cast<size_t>(table.matrix.dim(0)), "");
  for (const auto& e : entries) {
    if (e.image_feature_ref >= table.matrix.dim(0))
      throw ValidationError("image_feature_ref " + std::to_string(e.image_feature_ref) +
                            " out of range for feature table (" +
                            std::to_string(table.matrix.dim(0)) + " rows)");
    std::string& slot = table.row_ids[static_cast<size_t>(e.image_feature_ref)];
    if (slot.empty())
      slot = e.image_id;
    else if (slot != e.image_id)
      throw ValidationError("feature row " + std::to_string(e.image_feature_ref) +
                            " is claimed by two images: " + slot + ", " + e.image_id);
  }
}

// --- in-memory corpus for training/evaluation -------------------------------

struct CorpusItem {
  std::string utterance_id;
  std::string image_id;
  int image_row = -1;
  std::string caption_text;
  FeatureMatrix features;
};

struct LoadedCorpus {
  std::vector<CorpusItem> items[3];  // indexed by Split
  ImageFeatureTable images;

  std::vector<CorpusItem>& split(Split s) { return items[static_cast<int>(s)]; }
  const std::vector<CorpusItem>& split(Split s) const { return items[static_cast<int>(s)]; }
};

inline std::string resolve_path(const std::string& base_file, const std::string& p) {
  namespace fs = std::filesystem;
  fs::path pp(p);
  if (pp.is_absolute()) return p;
  return (fs::path(base_file).parent_path() / pp).string();
}

// Loads every entry's features into memory, computing MFCCs for entries that
// reference raw audio. All acoustic matrices must agree on dimensionality.
inline LoadedCorpus load_corpus(const std::string& manifest_path,
                                const std::string& image_features_path,
                                const FrontendConfig& fe) {
  LoadedCorpus c;
  auto entries = load_manifest(manifest_path);
  if (entries.empty()) throw ValidationError("manifest is empty: " + manifest_path);
  c.images = load_image_features(image_features_path);
  bind_image_ids(c.images, entries);
  int dims = -1;
  for (const auto& e : entries) {
    CorpusItem item;
    item.utterance_id = e.utterance_id;
    item.image_id = e.image_id;
    item.image_row = e.image_feature_ref;
    item.caption_text = e.caption_text;
    if (!e.feature_path.empty()) {
      item.features.data = read_f32m(resolve_path(manifest_path, e.feature_path));
      item.features.n_valid_frames = item.features.data.dim(0);
      item.features.kind =
          item.features.data.dim(1) == 39 ? FeatureKind::mfcc39 : FeatureKind::external;
    } else {
      const Waveform w = read_wav(resolve_path(manifest_path, e.audio_path));
      if (w.sample_rate != 16000)
        throw ValidationError("wav '" + e.audio_path + "' is " +
                              std::to_string(w.sample_rate) +
                              " Hz; 16 kHz input is required and resampling is not applied");
      item.features = extract_features(w, fe);
    }
    if (dims < 0)
      dims = item.features.dims();
    else if (dims != item.features.dims())
      throw ValidationError("inconsistent feature dimensionality in corpus: " +
                            std::to_string(dims) + " vs " +
                            std::to_string(item.features.dims()) + " (" + e.utterance_id + ")");
    c.items[static_cast<int>(e.split)].push_back(std::move(item));
  }
  return c;
}

// Caption/image indices of one split: the gallery is the unique images in
// first-appearance order.
struct SplitView {
  std::vector<int> image_rows;                 // gallery, unique rows
  std::vector<int> caption_to_image;           // per caption, gallery index
  std::vector<std::vector<int>> image_to_captions;
};

inline SplitView make_split_view(const std::vector<CorpusItem>& items) {
  SplitView v;
  std::map<int, int> row_to_gallery;
  for (const auto& it : items) {
    if (!row_to_gallery.count(it.image_row)) {
      row_to_gallery[it.image_row] = static_cast<int>(v.image_rows.size());
      v.image_rows.push_back(it.image_row);
      v.image_to_captions.emplace_back();
    }
    const int gi = row_to_gallery[it.image_row];
    v.image_to_captions[static_cast<size_t>(gi)].push_back(
        static_cast<int>(v.caption_to_image.size()));
    v.caption_to_image.push_back(gi);
  }
  return v;
}

}  // namespace s2i
