// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_PIPELINE_H_
#define MRCAE_PIPELINE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mrcae/audio.h"
#include "mrcae/bss_eval.h"
#include "mrcae/config.h"
#include "mrcae/dataset.h"
#include "mrcae/model.h"
#include "mrcae/ops.h"
#include "mrcae/trainer.h"

namespace mrcae {

/// Separates one mixture: normalize, segment with `hop`, infer in groups of
/// `infer_batch` segments, split the L*C output maps per source, overlap-add
/// and multiply by the mixture std when `rescale` is set (targets were
/// trained in std units). Returns one clip per source.
template <typename T>
std::vector<AudioClip> separate_clip(const Model<T>& model, const AudioClip& mixture,
                                     std::size_t hop, OverlapMode overlap,
                                     std::size_t infer_batch, bool rescale = true);

/// Source names the model separates, in output order.
std::vector<std::string> target_names(const RunConfig& config,
                                      const std::vector<std::string>& manifest_sources);

// ---------------------------------------------------------------------------
// Commands. Each throws ConfigError, FormatError or NumericError; the CLI
// maps these to exit codes 2, 3 and 4.

/// Writes config.synth.songs songs plus manifest.json into out_dir.
Manifest cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir);

struct TrainSummary {
  TrainHistory history;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path log;
};

/// Trains on the train and validation songs of config.data.manifest and
/// writes best.ckpt, last.ckpt and train_log.jsonl into
/// config.paths.checkpoint_dir. `resume` starts from an existing checkpoint.
TrainSummary cmd_train(const RunConfig& config,
                       const std::optional<std::filesystem::path>& resume = {});

/// Writes <target>.wav for every separated source into out_dir.
std::vector<std::filesystem::path> cmd_separate(const RunConfig& config,
                                                const std::filesystem::path& checkpoint,
                                                const std::filesystem::path& mixture,
                                                const std::filesystem::path& out_dir);

struct SongReport {
  std::string song;
  std::vector<std::string> sources;
  EvalResult result;
};

struct EvalReport {
  std::vector<SongReport> songs;
  std::vector<std::string> sources;  // names behind the median rows
  std::optional<MedianReport> median;
  std::vector<std::string> failures;  // "song: reason" for skipped songs
  bool complete = true;
};

/// Scores estimates_dir/<song>/<source>.wav against references_dir/<song>/.
/// Reference names come from references_dir/manifest.json when present,
/// otherwise from the non-mixture WAVs of each song directory. Unreadable
/// songs are recorded as failures and the report is marked incomplete.
EvalReport cmd_evaluate(const RunConfig& config,
                        const std::filesystem::path& estimates_dir,
                        const std::filesystem::path& references_dir);

nlohmann::json to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);

struct GradcheckGroup {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double threshold = 1e-4;
  bool passed() const;
};

/// The double-precision model used by gradcheck: one encoder and one decoder
/// layer with sets {(2,3),(2,5)}, N=32, C=2, L=1, output filter length 5.
ModelConfig gradcheck_model_config();

/// Central differences (step 1e-5) of the batch L1 loss against the tape
/// gradients for every trainable tensor of the tiny model. The error of an
/// entry is |a - n| / max(|a|, |n|, 1e-3). `corrupt` scales the gradient
/// leaving one op kind to exercise the failure path.
GradcheckReport cmd_gradcheck(std::uint64_t seed,
                              std::optional<OpKind> corrupt = std::nullopt);

}  // namespace mrcae

#endif  // MRCAE_PIPELINE_H_
