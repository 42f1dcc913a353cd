// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_OPS_H_
#define MRCAE_OPS_H_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mrcae/tensor.h"

namespace mrcae {

// Zero padding ahead of the signal for a stride-1 "same" convolution. The
// remaining filter_len - 1 - left zeros go on the right.
inline std::size_t same_pad_left(std::size_t filter_len) {
  return (filter_len - 1) / 2;
}

// ---------------------------------------------------------------------------
// Forward primitives. These never record anything; Tape wraps them for
// training.

/// out[b][k][t] = bias[k] + sum_{c,tau} w[k][c][tau] * x[b][c][t + tau - left]
/// with zeros outside [0, length). Output length equals input length.
template <typename T>
Tensor3<T> conv1d(const Tensor3<T>& input, const FilterSetParams<T>& params);

/// Linear adjoint of conv1d with the same weights, plus a bias per output
/// channel: maps num_filters channels onto in_channels channels.
template <typename T>
Tensor3<T> conv_transpose1d(const Tensor3<T>& input,
                            const FilterSetParams<T>& params);

/// Per-channel normalization over (batch x time). kTrain uses batch
/// statistics and folds them into the running statistics; kInfer reads the
/// running statistics only.
template <typename T>
Tensor3<T> batchnorm(const Tensor3<T>& input, BatchNormParams<T>& params,
                     Mode mode);

template <typename T>
Tensor3<T> batchnorm_infer(const Tensor3<T>& input,
                           const BatchNormParams<T>& params);

/// ELU with alpha = 1.
template <typename T>
Tensor3<T> elu(const Tensor3<T>& input);

/// Sum of absolute differences over every entry, accumulated in double.
template <typename T>
double l1_loss(const Tensor3<T>& pred, const Tensor3<T>& target);

template <typename T>
Tensor3<T> concat_channels(std::span<const Tensor3<T>> parts);

// ---------------------------------------------------------------------------
// Reverse-mode recording.

enum class OpKind {
  kConv1d,
  kConvTranspose1d,
  kBatchNorm,
  kElu,
  kConcat,
  kL1Loss,
};

const char* op_kind_name(OpKind kind);

template <typename T>
class Tape {
 public:
  using Node = std::size_t;

  struct AdjointRecord {
    OpKind op_kind;
    std::vector<Node> saved_inputs;
    Node output_slot;
    std::function<void(Tape&)> backward;
  };

  /// Registers a value that has no producer (network input, constants).
  Node input(Tensor3<T> value);

  const Tensor3<T>& value(Node n) const { return values_[n]; }
  /// Accumulated gradient; all zeros for nodes backward never reached.
  const Tensor3<T>& grad(Node n);

  // Gradient pointers may be null when the caller does not need them.
  // Parameter gradients accumulate (+=) into the given buffers.
  Node conv1d(Node x, const FilterSetParams<T>& params,
              FilterSetParams<T>* grad);
  Node conv_transpose1d(Node x, const FilterSetParams<T>& params,
                        FilterSetParams<T>* grad);
  Node batchnorm(Node x, BatchNormParams<T>& params, BatchNormGrads<T>* grad);
  Node elu(Node x);
  Node concat_channels(std::span<const Node> parts);

  /// Records scale * sum |pred - target| as a 1x1x1 node and returns its value.
  double l1_loss(Node pred, const Tensor3<T>& target, double scale = 1.0);

  /// Seeds d(loss)/d(loss) = 1 on the most recent l1_loss node and runs every
  /// record in reverse. The tape is consumed.
  void backward();
  /// Same, seeding an arbitrary node with the given cotangent.
  void backward(Node output, const Tensor3<T>& seed);

  std::span<const AdjointRecord> records() const { return records_; }

  /// Test hook: multiplies every gradient produced by records of `kind`
  /// by `factor`.
  void corrupt_backward_for_testing(OpKind kind, T factor) {
    corrupt_kind_ = kind;
    corrupt_factor_ = factor;
    corrupt_ = true;
  }

 private:
  Node push(Tensor3<T> value);
  Tensor3<T>& grad_slot(Node n);
  const Tensor3<T>& scaled_grad(Node n, OpKind kind, Tensor3<T>& scratch);
  void record(OpKind kind, std::vector<Node> inputs, Node out,
              std::function<void(Tape&)> fn);
  T factor_for(OpKind kind) const {
    return corrupt_ && kind == corrupt_kind_ ? corrupt_factor_ : T(1);
  }

  std::vector<Tensor3<T>> values_;
  std::vector<Tensor3<T>> grads_;
  std::vector<AdjointRecord> records_;
  Node loss_node_ = static_cast<Node>(-1);
  bool corrupt_ = false;
  OpKind corrupt_kind_ = OpKind::kConv1d;
  T corrupt_factor_ = T(1);
};

// ---------------------------------------------------------------------------
// Backward kernels, exposed for direct testing. All of them accumulate.

template <typename T>
void conv1d_backward(const Tensor3<T>& input, const FilterSetParams<T>& params,
                     const Tensor3<T>& grad_out, Tensor3<T>* grad_in,
                     FilterSetParams<T>* grad_params);

template <typename T>
void conv_transpose1d_backward(const Tensor3<T>& input,
                               const FilterSetParams<T>& params,
                               const Tensor3<T>& grad_out, Tensor3<T>* grad_in,
                               FilterSetParams<T>* grad_params);

}  // namespace mrcae

#endif  // MRCAE_OPS_H_
