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
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "s2i/common.hpp"

namespace s2i {

struct Waveform {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = 0;
};

namespace detail {

inline std::uint32_t rd_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t rd_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// Strict reader: RIFF/WAVE, PCM, mono, 16-bit. No resampling or conversion;
// anything else is rejected with a ValidationError naming the problem.
inline Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open wav: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw ValidationError("not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* id = reinterpret_cast<const char*>(buf.data() + pos);
    const std::uint32_t len = detail::rd_u32le(buf.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + len > buf.size()) throw ValidationError("truncated wav chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw ValidationError("short fmt chunk in " + path);
      format = detail::rd_u16le(buf.data() + body);
      channels = detail::rd_u16le(buf.data() + body + 2);
      rate = detail::rd_u32le(buf.data() + body + 4);
      bits = detail::rd_u16le(buf.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data_off == 0) throw ValidationError("missing fmt/data chunk in " + path);
  if (format != 1) throw ValidationError("wav is not uncompressed PCM: " + path);
  if (channels != 1) throw ValidationError("wav is not mono: " + path);
  if (bits != 16) throw ValidationError("wav is not 16-bit: " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  const size_t n = data_len / 2;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const std::int16_t s = static_cast<std::int16_t>(
        detail::rd_u16le(buf.data() + data_off + 2 * i));
    w.samples[i] = static_cast<float>(s) / 32768.0f;
  }
  return w;
}

inline void write_wav(const std::string& path, const std::vector<float>& samples,
                      int sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open for write: " + path);
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  auto u32 = [&](std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                          static_cast<unsigned char>((x >> 8) & 0xff),
                          static_cast<unsigned char>((x >> 16) & 0xff),
                          static_cast<unsigned char>((x >> 24) & 0xff)};
    os.write(reinterpret_cast<char*>(b), 4);
  };
  auto u16 = [&](std::uint16_t x) {
    unsigned char b[2] = {static_cast<unsigned char>(x & 0xff),
                          static_cast<unsigned char>((x >> 8) & 0xff)};
    os.write(reinterpret_cast<char*>(b), 2);
  };
  os.write("RIFF", 4);
  u32(36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(static_cast<std::uint32_t>(sample_rate));
  u32(static_cast<std::uint32_t>(sample_rate) * 2);  // byte rate
  u16(2);                                            // block align
  u16(16);                                           // bits
  os.write("data", 4);
  u32(data_len);
  for (float x : samples) {
    const float c = std::clamp(x, -1.0f, 1.0f);
    const std::int16_t s = static_cast<std::int16_t>(std::lrint(c * 32767.0f));
    u16(static_cast<std::uint16_t>(s));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace s2i
