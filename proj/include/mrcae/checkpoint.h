// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_CHECKPOINT_H_
#define MRCAE_CHECKPOINT_H_

#include <filesystem>

#include "mrcae/model.h"

namespace mrcae {

// Layout (little-endian):
//   "MRCAE01\0"
//   u32 config length, config as JSON text
//   u32 tensor count
//   per tensor: u32 name length, name, u32 rank, u32 dims[rank], f32 data
//
// Tensors are every trainable tensor plus the batch-norm running statistics,
// in Model::all_tensors() order.

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);

/// Throws FormatError (bad magic, truncation, unknown or mis-shaped tensor).
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);

/// As above, plus ConfigError when segment_len, in_channels or num_sources
/// differ from `expected`.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path,
                         const ModelConfig& expected);

}  // namespace mrcae

#endif  // MRCAE_CHECKPOINT_H_
