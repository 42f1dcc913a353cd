// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_BSS_EVAL_H_
#define MRCAE_BSS_EVAL_H_

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mrcae/audio.h"

namespace mrcae {

inline constexpr double kMetricCapDb = 300.0;
inline constexpr std::size_t kDefaultFilterTaps = 512;

/// Span of every delay 0..taps-1 of a set of 1-D target signals. Signals
/// of length n live in the zero-padded domain of length n + taps - 1, where
/// delayed copies are exact shifts and the Gram matrix is block Toeplitz.
class DelayBasis {
 public:
  DelayBasis(std::span<const std::vector<double>> targets, std::size_t taps);

  std::size_t taps() const { return taps_; }
  std::size_t signal_length() const { return length_; }
  std::size_t padded_length() const { return length_ + taps_ - 1; }
  /// Whether the delayed targets are linearly dependent, in which case the
  /// projection goes through the Gram pseudo-inverse.
  bool rank_deficient() const { return rank_deficient_; }

  /// Least-squares projection of `estimate` (length n) onto the span;
  /// returns padded_length() samples.
  std::vector<double> project(std::span<const double> estimate) const;

 private:
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

  std::vector<std::vector<double>> targets_;
  std::size_t taps_;
  std::size_t length_;
  bool zero_ = false;
  bool rank_deficient_ = false;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd basis_;  // eigenvectors of the nonzero Gram eigenvalues
  Eigen::VectorXd inv_lambda_;
};

/// Projection of `estimate` onto all taps-long delays of every target.
std::vector<double> project_filtered(std::span<const std::vector<double>> targets,
                                     std::span<const double> estimate,
                                     std::size_t taps);

/// BSS-Eval image decomposition, samples[channel][padded time].
struct Decomposition {
  std::vector<std::vector<double>> s_true;
  std::vector<std::vector<double>> e_spat;
  std::vector<std::vector<double>> e_interf;
  std::vector<std::vector<double>> e_artif;
};

Decomposition decompose_image(const AudioClip& estimate,
                              std::span<const AudioClip> references,
                              std::size_t source_index, std::size_t taps);

struct SourceMetrics {
  double sdr = 0.0;
  double isr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
};

/// Energy ratios in dB. A zero error energy (or one below 1e-20 of its
/// numerator, i.e. roundoff) yields the kMetricCapDb cap.
SourceMetrics metrics_from_decomposition(const Decomposition& d);

struct EvalResult {
  std::vector<SourceMetrics> sources;
  std::size_t filter_len = 0;
};

/// Whole-song metrics. estimates[i] is scored against references[i]; every
/// reference contributes to the interference subspace, so fewer estimates
/// than references is allowed.
EvalResult evaluate_song(std::span<const AudioClip> estimates,
                         std::span<const AudioClip> references,
                         std::size_t taps = kDefaultFilterTaps);

struct MedianReport {
  std::vector<SourceMetrics> sources;  // per-source medians across songs
  std::size_t song_count = 0;
};

MedianReport aggregate_median(std::span<const EvalResult> results);

double median(std::vector<double> values);

}  // namespace mrcae

#endif  // MRCAE_BSS_EVAL_H_
