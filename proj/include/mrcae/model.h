// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_MODEL_H_
#define MRCAE_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mrcae/ops.h"
#include "mrcae/tensor.h"

namespace mrcae {

struct SetSpec {
  std::size_t num_filters = 1;
  std::size_t filter_len = 1;
  bool operator==(const SetSpec&) const = default;
};

enum class LayerKind { kEncoderConv, kDecoderTranspose };

struct LayerSpec {
  LayerKind kind = LayerKind::kEncoderConv;
  std::vector<SetSpec> sets;

  // Feature maps produced by the layer (sum of the set filter counts).
  std::size_t out_channels() const;
  bool operator==(const LayerSpec&) const = default;
};

struct ModelConfig {
  std::size_t segment_len = 1025;
  std::size_t in_channels = 2;
  std::size_t num_sources = 1;
  std::vector<LayerSpec> encoder;
  std::vector<LayerSpec> decoder;
  std::size_t output_filter_len = 1025;
  std::uint64_t seed = 0;

  // The output layer always has one filter per (source, channel) pair.
  std::size_t output_channels() const { return num_sources * in_channels; }

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  /// Two conv and two transpose-conv layers with five filter sets each,
  /// lengths 5/50/256/512/1025, stereo in, one stereo source out.
  static ModelConfig full_scale();

  bool operator==(const ModelConfig&) const = default;
};

/// One filter bank of a layer followed by its batch normalization.
template <typename T>
struct FilterSetBlock {
  FilterSetParams<T> filters;
  BatchNormParams<T> norm;
};

template <typename T>
struct ModelLayer {
  LayerKind kind = LayerKind::kEncoderConv;
  std::size_t in_channels = 0;
  std::vector<FilterSetBlock<T>> sets;

  std::size_t out_channels() const;
};

/// Named view onto one parameter tensor.
template <typename T>
struct TensorView {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::span<T> values;
};

template <typename T>
class ModelGrads;

/// Multi-resolution convolutional auto-encoder. Every set of every layer
/// runs filter bank -> batch norm -> ELU on the layer input and the set
/// outputs are stacked in config order. Encoder layers correlate, decoder
/// layers apply the transpose, and a final linear transpose layer emits
/// num_sources * in_channels maps ordered source-major.
template <typename T>
class Model {
 public:
  Model() = default;
  /// Validates the config and allocates zero weights and biases, unit gamma,
  /// zero beta and unit running variance.
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::vector<ModelLayer<T>>& layers() { return layers_; }
  const std::vector<ModelLayer<T>>& layers() const { return layers_; }
  FilterSetParams<T>& output() { return output_; }
  const FilterSetParams<T>& output() const { return output_; }

  // Channel count after each hidden layer, then the output layer.
  std::vector<std::size_t> feature_map_counts() const;
  std::size_t parameter_count() const;

  /// Glorot-uniform weights, deterministic in `seed`; resets biases, beta,
  /// gamma and running statistics.
  void init_params(std::uint64_t seed);

  /// Infer-mode pass. Input must be (batch, in_channels, segment_len).
  Tensor3<T> infer(const Tensor3<T>& batch) const;
  /// Train-mode pass recorded on `tape`. Batch-norm running statistics are
  /// updated. Parameter gradients accumulate into `grads` during backward.
  typename Tape<T>::Node forward(Tape<T>& tape, typename Tape<T>::Node input,
                                 ModelGrads<T>* grads);

  // Trainable tensors in a fixed order shared with ModelGrads::views().
  std::vector<TensorView<T>> trainable();
  std::vector<TensorView<const T>> trainable() const;
  // Trainable tensors plus batch-norm running statistics (checkpoint order).
  std::vector<TensorView<T>> all_tensors();
  std::vector<TensorView<const T>> all_tensors() const;

  bool operator==(const Model& other) const;

 private:
  void check_input(const Tensor3<T>& batch) const;

  ModelConfig config_;
  std::vector<ModelLayer<T>> layers_;
  FilterSetParams<T> output_;
};

/// Gradient buffers shaped like a model's trainable tensors.
template <typename T>
class ModelGrads {
 public:
  ModelGrads() = default;
  explicit ModelGrads(const Model<T>& model);

  std::vector<std::vector<FilterSetParams<T>>>& filters() { return filters_; }
  std::vector<std::vector<BatchNormGrads<T>>>& norms() { return norms_; }
  FilterSetParams<T>& output() { return output_; }

  void zero();
  std::vector<TensorView<T>> views();

 private:
  std::vector<std::vector<FilterSetParams<T>>> filters_;
  std::vector<std::vector<BatchNormGrads<T>>> norms_;
  FilterSetParams<T> output_;
  std::vector<std::string> names_;
};

template <typename T>
Model<T> build_model(const ModelConfig& config) {
  return Model<T>(config);
}

template <typename T>
Tensor3<T> forward(Model<T>& model, const Tensor3<T>& batch, Mode mode);

/// L1 loss (sum of |estimate - target| over sources, channels and samples)
/// summed over the batch, with gradients for every trainable tensor.
/// Runs in train mode, so batch-norm running statistics advance.
template <typename T>
std::pair<double, ModelGrads<T>> loss_and_gradients(Model<T>& model,
                                                    const Tensor3<T>& batch,
                                                    const Tensor3<T>& targets);

template <typename T, typename U>
Model<T> model_cast(const Model<U>& model);

}  // namespace mrcae

#endif  // MRCAE_MODEL_H_
