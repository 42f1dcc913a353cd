// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_CONFIG_H_
#define MRCAE_CONFIG_H_

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrcae/datapipe.h"
#include "mrcae/model.h"
#include "mrcae/trainer.h"

namespace mrcae {

struct DataConfig {
  std::filesystem::path manifest = "data/manifest.json";
  std::size_t seg_len = 1025;
  std::size_t hop_test = 16;
  std::size_t hop_train = 1025;
  bool scale_targets = true;
  OverlapMode overlap = OverlapMode::kAverage;
  // Source names to separate, in output order. Empty: the first num_sources
  // names listed in the manifest.
  std::vector<std::string> targets;
  std::size_t infer_batch = 256;
};

struct EvalConfig {
  std::size_t filter_taps = 512;
};

struct PathsConfig {
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path report_dir = "reports";
};

struct SynthConfig {
  std::size_t songs = 6;
  double test_ratio = 0.2;
  double val_ratio = 0.1;
  // Source recipes, base seed, duration and rate. Song i uses seed + i.
  SynthSpec spec = default_spec();

  static SynthSpec default_spec();
};

enum class Precision { kSingle, kDouble };

struct RunConfig {
  ModelConfig model = ModelConfig::full_scale();
  Hyperparams hyper;
  DataConfig data;
  EvalConfig eval;
  PathsConfig paths;
  SynthConfig synth;
  Precision precision = Precision::kSingle;

  /// Cross-field checks (segment lengths agree, ranges valid).
  void validate() const;
  /// Overrides every seed (model init, shuffling, synthesis).
  void set_seed(std::uint64_t seed);
};

// JSON mapping. Missing keys keep their defaults; unknown keys throw
// ConfigError naming the key.
nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace mrcae

#endif  // MRCAE_CONFIG_H_
