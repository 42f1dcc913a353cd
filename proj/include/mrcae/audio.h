// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_AUDIO_H_
#define MRCAE_AUDIO_H_

#include <cstddef>
#include <filesystem>
#include <vector>

namespace mrcae {

/// Multi-channel time-domain audio, samples[channel][time].
struct AudioClip {
  double sample_rate = 44100.0;
  std::vector<std::vector<double>> samples;

  AudioClip() = default;
  AudioClip(double rate, std::size_t channels, std::size_t length)
      : sample_rate(rate),
        samples(channels, std::vector<double>(length, 0.0)) {}

  std::size_t channels() const { return samples.size(); }
  std::size_t length() const { return samples.empty() ? 0 : samples[0].size(); }

  /// Throws ConfigError for empty or ragged clips, NumericError for
  /// non-finite samples.
  void validate() const;

  bool operator==(const AudioClip&) const = default;
};

enum class WavEncoding { kFloat32, kPcm16 };

/// Reads RIFF/WAVE with PCM 16-bit or IEEE float 32-bit samples (plain or
/// WAVE_FORMAT_EXTENSIBLE). PCM16 is scaled by 1/32768.
AudioClip read_wav(const std::filesystem::path& path);

void write_wav(const AudioClip& clip, const std::filesystem::path& path,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace mrcae

#endif  // MRCAE_AUDIO_H_
