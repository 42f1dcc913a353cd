// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mrcae/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "mrcae/errors.h"

namespace mrcae {

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "train";
}

std::vector<SongEntry> Manifest::songs_in(Split split) const {
  std::vector<SongEntry> out;
  std::copy_if(songs.begin(), songs.end(), std::back_inserter(out),
               [&](const SongEntry& s) { return s.split == split; });
  return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  Manifest m;
  m.root = path.parent_path();
  try {
    const auto j = nlohmann::json::parse(in);
    m.sample_rate = j.at("sample_rate").get<double>();
    m.sources = j.at("sources").get<std::vector<std::string>>();
    for (const auto& s : j.at("songs")) {
      SongEntry e;
      e.name = s.at("name").get<std::string>();
      const auto split = s.at("split").get<std::string>();
      if (split == "train") {
        e.split = Split::kTrain;
      } else if (split == "validation") {
        e.split = Split::kValidation;
      } else if (split == "test") {
        e.split = Split::kTest;
      } else {
        throw FormatError(path.string() + ": song " + e.name +
                          " has unknown split '" + split + "'");
      }
      m.songs.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json songs = nlohmann::json::array();
  for (const auto& s : manifest.songs) {
    songs.push_back({{"name", s.name}, {"split", split_name(s.split)}});
  }
  const nlohmann::json j = {{"sample_rate", manifest.sample_rate},
                            {"sources", manifest.sources},
                            {"songs", songs}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<Split> assign_splits(std::size_t songs, double test_ratio,
                                 double val_ratio) {
  const std::size_t n_test = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(double(songs) * test_ratio)));
  if (songs < n_test + 2) {
    throw ConfigError("need at least one train, validation and test song");
  }
  const std::size_t rest = songs - n_test;
  const std::size_t n_val = std::min<std::size_t>(
      rest - 1, std::max<std::size_t>(
                    1, static_cast<std::size_t>(std::ceil(double(rest) * val_ratio))));
  std::vector<Split> out(songs, Split::kTrain);
  for (std::size_t i = rest - n_val; i < rest; ++i) out[i] = Split::kValidation;
  for (std::size_t i = rest; i < songs; ++i) out[i] = Split::kTest;
  return out;
}

SongAudio load_song(const Manifest& manifest, const std::string& song,
                    const std::vector<std::string>& sources) {
  const auto dir = manifest.root / song;
  SongAudio audio;
  audio.mixture = read_wav(dir / "mixture.wav");
  for (const auto& name : sources) {
    AudioClip clip = read_wav(dir / (name + ".wav"));
    if (clip.length() != audio.mixture.length() ||
        clip.channels() != audio.mixture.channels()) {
      throw FormatError(song + ": " + name + ".wav does not match mixture.wav in shape");
    }
    audio.sources.push_back(std::move(clip));
  }
  return audio;
}

}  // namespace mrcae
