// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mrcae/datapipe.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "mrcae/errors.h"

namespace mrcae {

std::pair<AudioClip, NormStats> normalize(const AudioClip& clip) {
  clip.validate();
  double sum = 0;
  std::size_t count = 0;
  for (const auto& ch : clip.samples) {
    for (double v : ch) sum += v;
    count += ch.size();
  }
  NormStats stats;
  stats.mean = sum / double(count);
  const double first = clip.samples[0][0];
  const bool constant = std::ranges::all_of(clip.samples, [&](const auto& ch) {
    return std::ranges::all_of(ch, [&](double v) { return v == first; });
  });
  if (constant) stats.mean = first;  // exact, so the output is exactly zero
  double sq = 0;
  for (const auto& ch : clip.samples) {
    for (double v : ch) sq += (v - stats.mean) * (v - stats.mean);
  }
  stats.std = std::max(std::sqrt(sq / double(count)), kStdFloor);

  AudioClip out = clip;
  for (auto& ch : out.samples) {
    for (double& v : ch) v = (v - stats.mean) / stats.std;
  }
  return {std::move(out), stats};
}

std::vector<AudioClip> scale_targets(std::span<const AudioClip> sources,
                                     const NormStats& stats) {
  std::vector<AudioClip> out(sources.begin(), sources.end());
  for (auto& clip : out) {
    for (auto& ch : clip.samples) {
      for (double& v : ch) v /= stats.std;
    }
  }
  return out;
}

SegmentBatch segment(const AudioClip& clip, std::size_t seg_len,
                     std::size_t hop) {
  if (seg_len == 0 || hop == 0) throw ConfigError("segment: seg_len and hop must be >= 1");
  clip.validate();
  const std::size_t length = clip.length();
  const std::size_t count = segment_count(length, seg_len, hop);
  SegmentBatch batch;
  batch.sample_rate = clip.sample_rate;
  batch.segments = Tensor3<double>(count, clip.channels(), seg_len);
  batch.offsets.resize(count);
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t off = s * hop;
    batch.offsets[s] = off;
    for (std::size_t c = 0; c < clip.channels(); ++c) {
      auto dst = batch.segments.row(s, c);
      const auto& src = clip.samples[c];
      const std::size_t avail = off < length ? std::min(seg_len, length - off) : 0;
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(off), avail, dst.begin());
    }
  }
  return batch;
}

AudioClip overlap_add(const SegmentBatch& batch, std::size_t total_len,
                      OverlapMode mode) {
  const auto& seg = batch.segments;
  if (seg.batch() != batch.offsets.size()) {
    throw ConfigError("overlap_add: offsets do not match segment count");
  }
  std::size_t padded = total_len;
  for (std::size_t off : batch.offsets) padded = std::max(padded, off + seg.length());
  AudioClip out(batch.sample_rate, seg.channels(), padded);
  std::vector<std::uint32_t> coverage(padded, 0);
  for (std::size_t s = 0; s < seg.batch(); ++s) {
    const std::size_t off = batch.offsets[s];
    for (std::size_t t = 0; t < seg.length(); ++t) ++coverage[off + t];
    for (std::size_t c = 0; c < seg.channels(); ++c) {
      auto src = seg.row(s, c);
      auto& dst = out.samples[c];
      for (std::size_t t = 0; t < src.size(); ++t) dst[off + t] += src[t];
    }
  }
  for (std::size_t t = 0; t < total_len; ++t) {
    if (coverage[t] == 0) {
      throw NumericError("overlap_add: sample " + std::to_string(t) +
                         " is not covered by any segment");
    }
  }
  for (auto& ch : out.samples) {
    ch.resize(total_len);
    if (mode == OverlapMode::kAverage) {
      for (std::size_t t = 0; t < total_len; ++t) ch[t] /= coverage[t];
    }
  }
  return out;
}

TrainingPairs make_training_pairs(const AudioClip& mixture,
                                  std::span<const AudioClip> sources,
                                  std::size_t seg_len, std::size_t hop,
                                  bool scale_sources) {
  if (sources.empty()) throw ConfigError("make_training_pairs: no sources");
  for (const auto& s : sources) {
    if (s.length() != mixture.length() || s.channels() != mixture.channels()) {
      throw ConfigError("make_training_pairs: source and mixture shapes differ");
    }
  }
  auto [norm_mix, stats] = normalize(mixture);
  std::vector<AudioClip> targets =
      scale_sources ? scale_targets(sources, stats)
                    : std::vector<AudioClip>(sources.begin(), sources.end());

  TrainingPairs pairs;
  pairs.inputs = segment(norm_mix, seg_len, hop).segments;
  const std::size_t count = pairs.inputs.batch();
  const std::size_t channels = mixture.channels();
  pairs.targets = Tensor3<double>(count, sources.size() * channels, seg_len);
  for (std::size_t l = 0; l < targets.size(); ++l) {
    SegmentBatch sb = segment(targets[l], seg_len, hop);
    for (std::size_t b = 0; b < count; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        std::ranges::copy(sb.segments.row(b, c),
                          pairs.targets.row(b, l * channels + c).begin());
      }
    }
  }
  return pairs;
}

TrainingPairs concat_pairs(std::span<const TrainingPairs> sets) {
  TrainingPairs out;
  if (sets.empty()) return out;
  std::size_t total = 0;
  for (const auto& s : sets) total += s.size();
  const auto& first = sets[0];
  out.inputs = Tensor3<double>(total, first.inputs.channels(), first.inputs.length());
  out.targets = Tensor3<double>(total, first.targets.channels(), first.targets.length());
  auto in = out.inputs.data().begin();
  auto tg = out.targets.data().begin();
  for (const auto& s : sets) {
    if (s.inputs.channels() != first.inputs.channels() ||
        s.inputs.length() != first.inputs.length() ||
        s.targets.channels() != first.targets.channels()) {
      throw ConfigError("concat_pairs: pair sets have different shapes");
    }
    in = std::ranges::copy(s.inputs.data(), in).out;
    tg = std::ranges::copy(s.targets.data(), tg).out;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

void SynthSpec::validate() const {
  if (sources.size() < 2) throw ConfigError("synth: at least 2 sources required");
  if (!(duration > 0) || !(sample_rate > 0)) {
    throw ConfigError("synth: duration and sample_rate must be positive");
  }
  const double nyquist = sample_rate / 2;
  const std::size_t channels = sources[0].pan.size();
  if (channels == 0) throw ConfigError("synth: pan gains define the channel count");
  for (const auto& r : sources) {
    if (r.pan.size() != channels) {
      throw ConfigError("synth: source '" + r.name + "' has a different channel count");
    }
    for (double g : r.pan) {
      if (g < 0 || g > 1) throw ConfigError("synth: pan gains must lie in [0, 1]");
    }
    if (!(r.band_lo >= 0) || !(r.band_hi > r.band_lo) || r.band_hi > nyquist) {
      throw ConfigError("synth: band of source '" + r.name +
                        "' must satisfy 0 <= lo < hi <= Nyquist");
    }
  }
}

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller; avoids the implementation-defined std::normal_distribution.
double gaussian(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
}

std::vector<double> tone_stack(const SourceRecipe& r, std::size_t n,
                               double rate, std::mt19937_64& rng) {
  constexpr double kPhases[3] = {0.0, std::numbers::pi / 3, 2 * std::numbers::pi / 3};
  constexpr double kAmps[3] = {1.0, 0.8, 0.6};
  const double margin = 0.1 * (r.band_hi - r.band_lo);
  std::vector<double> out(n, 0.0);
  for (int k = 0; k < 3; ++k) {
    const double f = r.band_lo + margin +
                     uniform01(rng) * (r.band_hi - r.band_lo - 2 * margin);
    const double w = 2 * std::numbers::pi * f / rate;
    for (std::size_t t = 0; t < n; ++t) {
      out[t] += kAmps[k] * std::sin(w * double(t) + kPhases[k]);
    }
  }
  return out;
}

std::vector<double> filtered_noise(const SourceRecipe& r, std::size_t n,
                                   double rate, std::mt19937_64& rng) {
  const auto taps = bandpass_taps(r.band_lo, r.band_hi, rate);
  std::vector<double> white(n + taps.size() - 1);
  for (double& v : white) v = gaussian(rng);
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0;
    for (std::size_t k = 0; k < taps.size(); ++k) {
      acc += taps[k] * white[t + taps.size() - 1 - k];
    }
    out[t] = acc;
  }
  return out;
}

}  // namespace

std::vector<double> bandpass_taps(double lo_hz, double hi_hz,
                                  double sample_rate) {
  const double f1 = lo_hz / sample_rate;
  const double f2 = hi_hz / sample_rate;
  const std::size_t n = kNoiseFilterTaps;
  const double mid = double(n - 1) / 2;
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = double(i) - mid;
    const double window =
        0.54 - 0.46 * std::cos(2 * std::numbers::pi * double(i) / double(n - 1));
    h[i] = window * (2 * f2 * sinc(2 * f2 * m) - 2 * f1 * sinc(2 * f1 * m));
  }
  return h;
}

SynthSong synth_dataset(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
  if (n == 0) throw ConfigError("synth: duration shorter than one sample");
  const std::size_t channels = spec.sources[0].pan.size();

  SynthSong song;
  song.mixture = AudioClip(spec.sample_rate, channels, n);
  for (std::size_t i = 0; i < spec.sources.size(); ++i) {
    const auto& r = spec.sources[i];
    std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + i);
    std::vector<double> mono = r.kind == SourceKind::kToneStack
                                   ? tone_stack(r, n, spec.sample_rate, rng)
                                   : filtered_noise(r, n, spec.sample_rate, rng);
    double sq = 0;
    for (double v : mono) sq += v * v;
    const double rms = std::sqrt(sq / double(n));
    const double gain = rms > 0 ? r.level / rms : 0.0;

    AudioClip image(spec.sample_rate, channels, n);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t t = 0; t < n; ++t) {
        // Float-representable samples so float WAVs store them exactly.
        image.samples[c][t] = static_cast<float>(mono[t] * gain * r.pan[c]);
      }
    }
    song.sources.push_back(std::move(image));
  }
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < n; ++t) {
      double sum = 0;
      for (const auto& s : song.sources) sum += s.samples[c][t];
      song.mixture.samples[c][t] = sum;
    }
  }
  return song;
}

}  // namespace mrcae
