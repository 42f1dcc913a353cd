// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_TENSOR_H_
#define MRCAE_TENSOR_H_

#include <cstddef>
#include <span>
#include <vector>

#include "mrcae/errors.h"

namespace mrcae {

enum class Mode { kTrain, kInfer };

/// Batched multi-channel 1-D signal buffer. Storage is batch-major, then
/// channel-major, then time: element (b, c, t) lives at
/// (b * channels + c) * length + t.
template <typename T>
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t batch, std::size_t channels, std::size_t length,
          T fill = T(0))
      : batch_(batch),
        channels_(channels),
        length_(length),
        data_(batch * channels * length, fill) {}

  std::size_t batch() const { return batch_; }
  std::size_t channels() const { return channels_; }
  std::size_t length() const { return length_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t b, std::size_t c, std::size_t t) {
    return data_[(b * channels_ + c) * length_ + t];
  }
  const T& operator()(std::size_t b, std::size_t c, std::size_t t) const {
    return data_[(b * channels_ + c) * length_ + t];
  }

  // One channel row of one batch element.
  std::span<T> row(std::size_t b, std::size_t c) {
    return {data_.data() + (b * channels_ + c) * length_, length_};
  }
  std::span<const T> row(std::size_t b, std::size_t c) const {
    return {data_.data() + (b * channels_ + c) * length_, length_};
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const Tensor3& other) const {
    return batch_ == other.batch_ && channels_ == other.channels_ &&
           length_ == other.length_;
  }

  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t batch_ = 0;
  std::size_t channels_ = 0;
  std::size_t length_ = 0;
  std::vector<T> data_;
};

/// One set of filters sharing a length. Weights are laid out
/// [num_filters][in_channels][filter_len].
///
/// Used by conv1d the bias has num_filters entries (one per produced map).
/// Used by conv_transpose1d the op maps num_filters channels back onto
/// in_channels channels, so the bias has in_channels entries.
template <typename T>
struct FilterSetParams {
  std::size_t num_filters = 0;
  std::size_t in_channels = 0;
  std::size_t filter_len = 0;
  std::vector<T> weights;
  std::vector<T> bias;

  FilterSetParams() = default;
  FilterSetParams(std::size_t filters, std::size_t channels, std::size_t len,
                  std::size_t bias_len)
      : num_filters(filters),
        in_channels(channels),
        filter_len(len),
        weights(filters * channels * len, T(0)),
        bias(bias_len, T(0)) {}

  T& w(std::size_t k, std::size_t c, std::size_t tau) {
    return weights[(k * in_channels + c) * filter_len + tau];
  }
  const T& w(std::size_t k, std::size_t c, std::size_t tau) const {
    return weights[(k * in_channels + c) * filter_len + tau];
  }

  bool operator==(const FilterSetParams&) const = default;
};

template <typename T>
struct BatchNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double epsilon = 1e-3;
  double momentum = 0.99;

  BatchNormParams() = default;
  explicit BatchNormParams(std::size_t channels)
      : gamma(channels, T(1)),
        beta(channels, T(0)),
        running_mean(channels, T(0)),
        running_var(channels, T(1)) {}

  std::size_t channels() const { return gamma.size(); }

  bool operator==(const BatchNormParams&) const = default;
};

template <typename T>
struct BatchNormGrads {
  std::vector<T> gamma;
  std::vector<T> beta;

  BatchNormGrads() = default;
  explicit BatchNormGrads(std::size_t channels)
      : gamma(channels, T(0)), beta(channels, T(0)) {}
};

// Gradient buffers for a filter set share the parameter layout.
template <typename T>
FilterSetParams<T> zeros_like(const FilterSetParams<T>& p) {
  return FilterSetParams<T>(p.num_filters, p.in_channels, p.filter_len,
                            p.bias.size());
}

template <typename T>
bool all_finite(std::span<const T> values);

// Throws NumericError naming `what` when any value is NaN or infinite.
template <typename T>
void require_finite(std::span<const T> values, const char* what);

template <typename T, typename U>
Tensor3<T> tensor_cast(const Tensor3<U>& in) {
  Tensor3<T> out(in.batch(), in.channels(), in.length());
  auto src = in.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
  return out;
}

}  // namespace mrcae

#endif  // MRCAE_TENSOR_H_
