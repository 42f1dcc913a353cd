// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_TRAINER_H_
#define MRCAE_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "mrcae/datapipe.h"
#include "mrcae/model.h"

namespace mrcae {

struct Hyperparams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 100;
  std::size_t max_epochs = 20;
  std::size_t plateau_patience = 3;
  double lr_reduce_factor = 10.0;
  double min_lr = 1e-7;
  std::uint64_t seed = 0;

  void validate() const;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update with learning rate hp.lr. Params and grads
/// are matched by position. A non-finite gradient throws NumericError before
/// anything is modified.
template <typename T>
void adam_step(std::span<const TensorView<T>> params,
               std::span<const TensorView<T>> grads, AdamState<T>& state,
               const Hyperparams& hp);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // rate used during the epoch
  double wall_time = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;

  void append(const EpochRecord& record);
  /// Equality of everything except wall time.
  bool same_trajectory(const TrainHistory& other) const;
};

/// Learning rate for the epoch after the recorded ones. Replays the history
/// from hp.lr: an epoch improves when its val loss is strictly below the
/// running best; after plateau_patience non-improving epochs the rate is
/// divided by lr_reduce_factor (floored at min_lr) and the count restarts.
double reduce_on_plateau(const TrainHistory& history, const Hyperparams& hp);

/// Mean per-segment L1 loss in infer mode.
template <typename T>
double validate(const Model<T>& model, const TrainingPairs& pairs,
                std::size_t batch_size = 100);

struct FitOptions {
  // When set, best.ckpt, last.ckpt and train_log.jsonl are written here.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

template <typename T>
struct FitResult {
  Model<T> best;  // parameters from the epoch with the lowest val loss
  Model<T> last;
  TrainHistory history;
};

/// Adam on the per-batch mean of the per-segment L1 loss with plateau-based rate reduction.
/// Throws NumericError on a non-finite loss; checkpoints already on disk
/// are left in place.
template <typename T>
FitResult<T> fit(Model<T> model, const TrainingPairs& train,
                 const TrainingPairs& val, const Hyperparams& hp,
                 const FitOptions& options = {});

/// Gathers rows `indices` of a pair set into batch tensors of type T.
template <typename T>
std::pair<Tensor3<T>, Tensor3<T>> gather_batch(
    const TrainingPairs& pairs, std::span<const std::size_t> indices);

}  // namespace mrcae

#endif  // MRCAE_TRAINER_H_
