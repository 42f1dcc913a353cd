// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_DATASET_H_
#define MRCAE_DATASET_H_

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mrcae/audio.h"

namespace mrcae {

// On disk a dataset is a directory holding manifest.json and one directory
// per song with mixture.wav plus <source>.wav for every listed source:
//
//   {"sample_rate": 16000, "sources": ["tones", "noise"],
//    "songs": [{"name": "song000", "split": "train"}, ...]}

enum class Split { kTrain, kValidation, kTest };

const char* split_name(Split split);

struct SongEntry {
  std::string name;
  Split split = Split::kTrain;
};

struct Manifest {
  double sample_rate = 0.0;
  std::vector<std::string> sources;
  std::vector<SongEntry> songs;
  std::filesystem::path root;  // directory holding the song folders

  std::vector<SongEntry> songs_in(Split split) const;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Split for `songs` songs in order: the last max(1, floor(n * test_ratio))
/// are test songs; of the rest, the last max(1, ceil(m * val_ratio)) are
/// validation songs and the remainder train.
std::vector<Split> assign_splits(std::size_t songs, double test_ratio,
                                 double val_ratio);

struct SongAudio {
  AudioClip mixture;
  std::vector<AudioClip> sources;  // in the order requested
};

SongAudio load_song(const Manifest& manifest, const std::string& song,
                    const std::vector<std::string>& sources);

}  // namespace mrcae

#endif  // MRCAE_DATASET_H_
