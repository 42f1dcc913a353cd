// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "mrcae/audio.h"
#include "mrcae/errors.h"

namespace mrcae {

void AudioClip::validate() const {
  if (samples.empty()) throw ConfigError("audio clip has no channels");
  const std::size_t n = samples[0].size();
  if (n == 0) throw ConfigError("audio clip is empty");
  for (const auto& ch : samples) {
    if (ch.size() != n) throw ConfigError("audio clip channels differ in length");
    for (double v : ch) {
      if (!std::isfinite(v)) throw NumericError("audio clip has non-finite samples");
    }
  }
}

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  const std::string where = path.string() + ": ";

  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 ||
      std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw FormatError(where + "RIFF chunk: not a RIFF/WAVE file");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  std::uint16_t block_align = 0;
  bool have_fmt = false;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const std::string id(reinterpret_cast<const char*>(data + pos), 4);
    const std::uint32_t len = get_u32(data + pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (len < 16 || body + len > size) {
        throw FormatError(where + "fmt chunk: truncated");
      }
      format = get_u16(data + body);
      channels = get_u16(data + body + 2);
      rate = get_u32(data + body + 4);
      block_align = get_u16(data + body + 12);
      bits = get_u16(data + body + 14);
      if (format == kFormatExtensible) {
        if (len < 40) throw FormatError(where + "fmt chunk: short extensible header");
        format = get_u16(data + body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(where + "data chunk: precedes fmt chunk");
      pcm = data + body;
      // Tolerate writers that leave the streaming placeholder length.
      pcm_size = std::min<std::size_t>(len, size - body);
      break;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt) throw FormatError(where + "fmt chunk: missing");
  if (pcm == nullptr) throw FormatError(where + "data chunk: missing");
  if (channels == 0) throw FormatError(where + "fmt chunk: zero channels");

  const bool is_pcm16 = format == kFormatPcm && bits == 16;
  const bool is_float = format == kFormatFloat && bits == 32;
  if (!is_pcm16 && !is_float) {
    throw FormatError(where + "fmt chunk: unsupported codec (format " +
                      std::to_string(format) + ", " + std::to_string(bits) +
                      " bits)");
  }
  const std::size_t bytes_per_sample = bits / 8;
  if (block_align != channels * bytes_per_sample) {
    throw FormatError(where + "fmt chunk: inconsistent block alignment");
  }
  const std::size_t frames = pcm_size / block_align;
  if (frames == 0) throw FormatError(where + "data chunk: no samples");

  AudioClip clip(static_cast<double>(rate), channels, frames);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = pcm + t * block_align + c * bytes_per_sample;
      if (is_pcm16) {
        clip.samples[c][t] =
            static_cast<std::int16_t>(get_u16(p)) / 32768.0;
      } else {
        clip.samples[c][t] = std::bit_cast<float>(get_u32(p));
      }
    }
  }
  return clip;
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path,
               WavEncoding encoding) {
  clip.validate();
  const bool pcm16 = encoding == WavEncoding::kPcm16;
  const std::uint16_t channels = static_cast<std::uint16_t>(clip.channels());
  const std::uint16_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::uint16_t block_align = channels * bytes_per_sample;
  const std::size_t frames = clip.length();
  const std::uint32_t data_len = static_cast<std::uint32_t>(frames * block_align);
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * block_align);
  put_u16(out, block_align);
  put_u16(out, bytes_per_sample * 8);
  out += "data";
  put_u32(out, data_len);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = clip.samples[c][t];
      if (pcm16) {
        const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw FormatError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw FormatError("write failed for " + path.string());
}

}  // namespace mrcae
