// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_DATAPIPE_H_
#define MRCAE_DATAPIPE_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mrcae/audio.h"
#include "mrcae/tensor.h"

namespace mrcae {

// Per-song scalar statistics shared by every channel.
struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

inline constexpr double kStdFloor = 1e-8;

/// (x - mean) / std over all channels and samples jointly.
std::pair<AudioClip, NormStats> normalize(const AudioClip& clip);

/// Divides every source by the mixture's std. No mean shift.
std::vector<AudioClip> scale_targets(std::span<const AudioClip> sources,
                                     const NormStats& stats);

struct SegmentBatch {
  Tensor3<double> segments;  // (count, channels, seg_len)
  std::vector<std::size_t> offsets;
  double sample_rate = 0.0;
};

inline std::size_t segment_count(std::size_t length, std::size_t seg_len,
                                 std::size_t hop) {
  if (length <= seg_len) return 1;
  return (length - seg_len + hop - 1) / hop + 1;
}

/// Fixed-length windows at offsets 0, hop, 2*hop, ... over the clip,
/// zero-padded at the tail so the last window is full.
SegmentBatch segment(const AudioClip& clip, std::size_t seg_len,
                     std::size_t hop);

enum class OverlapMode {
  kAverage,  // sum divided by the number of covering segments
  kSum,
};

/// Shift-and-add reconstruction of the first total_len samples.
AudioClip overlap_add(const SegmentBatch& batch, std::size_t total_len,
                      OverlapMode mode = OverlapMode::kAverage);

/// Aligned (input, target) segments. Targets stack the sources source-major:
/// channel l * C + c holds source l, mixture channel c.
struct TrainingPairs {
  Tensor3<double> inputs;
  Tensor3<double> targets;
  std::size_t size() const { return inputs.batch(); }
};

TrainingPairs make_training_pairs(const AudioClip& mixture,
                                  std::span<const AudioClip> sources,
                                  std::size_t seg_len, std::size_t hop,
                                  bool scale_sources = true);

/// Stacks pair sets song after song.
TrainingPairs concat_pairs(std::span<const TrainingPairs> sets);

// ---------------------------------------------------------------------------
// Synthetic mixtures.

enum class SourceKind { kToneStack, kFilteredNoise };

struct SourceRecipe {
  std::string name;
  SourceKind kind = SourceKind::kToneStack;
  double band_lo = 200.0;
  double band_hi = 400.0;
  std::vector<double> pan;  // one gain per output channel, in [0, 1]
  double level = 0.1;       // RMS of the mono signal before panning
};

struct SynthSpec {
  std::uint64_t seed = 0;
  double duration = 8.0;
  double sample_rate = 16000.0;
  std::vector<SourceRecipe> sources;

  void validate() const;
};

struct SynthSong {
  AudioClip mixture;
  std::vector<AudioClip> sources;
};

inline constexpr std::size_t kNoiseFilterTaps = 63;

/// Deterministic in spec.seed. The mixture is the exact sum of the sources.
SynthSong synth_dataset(const SynthSpec& spec);

/// Band-pass windowed-sinc (Hamming) FIR with kNoiseFilterTaps taps.
std::vector<double> bandpass_taps(double lo_hz, double hi_hz,
                                  double sample_rate);

}  // namespace mrcae

#endif  // MRCAE_DATAPIPE_H_
