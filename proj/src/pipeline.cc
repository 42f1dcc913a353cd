// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mrcae/pipeline.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "mrcae/checkpoint.h"
#include "mrcae/datapipe.h"
#include "mrcae/errors.h"

namespace fs = std::filesystem;

namespace mrcae {

template <typename T>
std::vector<AudioClip> separate_clip(const Model<T>& model, const AudioClip& mixture,
                                     std::size_t hop, OverlapMode overlap,
                                     std::size_t infer_batch, bool rescale) {
  mixture.validate();
  const ModelConfig& cfg = model.config();
  if (mixture.channels() != cfg.in_channels) {
    throw ConfigError("mixture has " + std::to_string(mixture.channels()) +
                      " channels but the model expects " +
                      std::to_string(cfg.in_channels));
  }
  if (hop == 0 || hop > cfg.segment_len) {
    throw ConfigError("hop must lie in [1, segment length]");
  }
  if (infer_batch == 0) infer_batch = 1;

  const auto [norm, stats] = normalize(mixture);
  const std::size_t n = cfg.segment_len;
  const std::size_t channels = cfg.in_channels;
  const std::size_t sources = cfg.num_sources;
  const std::size_t length = mixture.length();
  const std::size_t count = segment_count(length, n, hop);
  const std::size_t padded = (count - 1) * hop + n;

  // Running shift-and-add sums, one row per (source, channel) output map.
  std::vector<std::vector<double>> acc(sources * channels,
                                       std::vector<double>(padded, 0.0));
  for (std::size_t s0 = 0; s0 < count; s0 += infer_batch) {
    const std::size_t s1 = std::min(count, s0 + infer_batch);
    Tensor3<T> x(s1 - s0, channels, n);
    for (std::size_t s = s0; s < s1; ++s) {
      const std::size_t off = s * hop;
      for (std::size_t c = 0; c < channels; ++c) {
        const auto& src = norm.samples[c];
        auto dst = x.row(s - s0, c);
        const std::size_t avail = off < length ? std::min(n, length - off) : 0;
        for (std::size_t t = 0; t < avail; ++t) dst[t] = static_cast<T>(src[off + t]);
      }
    }
    const Tensor3<T> y = model.infer(x);
    for (std::size_t s = s0; s < s1; ++s) {
      const std::size_t off = s * hop;
      for (std::size_t m = 0; m < sources * channels; ++m) {
        auto src = y.row(s - s0, m);
        double* dst = acc[m].data() + off;
        for (std::size_t t = 0; t < n; ++t) dst[t] += static_cast<double>(src[t]);
      }
    }
  }

  std::vector<double> coverage(length, 0.0);
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t off = s * hop;
    for (std::size_t t = off; t < std::min(length, off + n); ++t) coverage[t] += 1.0;
  }
  const double gain = rescale ? stats.std : 1.0;
  std::vector<AudioClip> out;
  for (std::size_t l = 0; l < sources; ++l) {
    AudioClip clip(mixture.sample_rate, channels, length);
    for (std::size_t c = 0; c < channels; ++c) {
      const auto& sum = acc[l * channels + c];
      auto& dst = clip.samples[c];
      for (std::size_t t = 0; t < length; ++t) {
        const double v = overlap == OverlapMode::kAverage ? sum[t] / coverage[t] : sum[t];
        dst[t] = v * gain;
      }
    }
    clip.validate();
    out.push_back(std::move(clip));
  }
  return out;
}

std::vector<std::string> target_names(const RunConfig& config,
                                      const std::vector<std::string>& manifest_sources) {
  const std::size_t l = config.model.num_sources;
  if (!config.data.targets.empty()) {
    if (config.data.targets.size() != l) {
      throw ConfigError("data.targets lists " + std::to_string(config.data.targets.size()) +
                        " names but model.num_sources is " + std::to_string(l));
    }
    return config.data.targets;
  }
  if (manifest_sources.size() >= l) {
    return {manifest_sources.begin(), manifest_sources.begin() + static_cast<long>(l)};
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < l; ++i) names.push_back("source" + std::to_string(i));
  return names;
}

// ---------------------------------------------------------------------------

Manifest cmd_synth(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const auto& sc = config.synth;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw FormatError("cannot create " + out_dir.string() + ": " + ec.message());

  Manifest manifest;
  manifest.sample_rate = sc.spec.sample_rate;
  manifest.root = out_dir;
  for (const auto& r : sc.spec.sources) manifest.sources.push_back(r.name);
  const auto splits = assign_splits(sc.songs, sc.test_ratio, sc.val_ratio);
  for (std::size_t i = 0; i < sc.songs; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "song%03zu", i);
    SynthSpec spec = sc.spec;
    spec.seed = sc.spec.seed + i;
    const SynthSong song = synth_dataset(spec);
    const fs::path dir = out_dir / name;
    fs::create_directories(dir, ec);
    if (ec) throw FormatError("cannot create " + dir.string() + ": " + ec.message());
    write_wav(song.mixture, dir / "mixture.wav");
    for (std::size_t l = 0; l < song.sources.size(); ++l) {
      write_wav(song.sources[l], dir / (manifest.sources[l] + ".wav"));
    }
    manifest.songs.push_back({name, splits[i]});
  }
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

namespace {

TrainingPairs pairs_for(const Manifest& manifest, Split split,
                        const std::vector<std::string>& names, const RunConfig& cfg) {
  std::vector<TrainingPairs> sets;
  for (const auto& song : manifest.songs_in(split)) {
    const SongAudio audio = load_song(manifest, song.name, names);
    if (audio.mixture.channels() != cfg.model.in_channels) {
      throw ConfigError(song.name + ": mixture has " +
                        std::to_string(audio.mixture.channels()) +
                        " channels but model.in_channels is " +
                        std::to_string(cfg.model.in_channels));
    }
    sets.push_back(make_training_pairs(audio.mixture, audio.sources, cfg.data.seg_len,
                                       cfg.data.hop_train, cfg.data.scale_targets));
  }
  if (sets.empty()) {
    throw ConfigError(std::string("manifest has no ") + split_name(split) + " songs");
  }
  return concat_pairs(sets);
}

template <typename T>
TrainSummary train_as(const RunConfig& cfg, const std::optional<fs::path>& resume) {
  const Manifest manifest = read_manifest(cfg.data.manifest);
  const auto names = target_names(cfg, manifest.sources);
  for (const auto& n : names) {
    if (std::find(manifest.sources.begin(), manifest.sources.end(), n) ==
        manifest.sources.end()) {
      throw ConfigError("target '" + n + "' is not a source in " +
                        cfg.data.manifest.string());
    }
  }
  const TrainingPairs train = pairs_for(manifest, Split::kTrain, names, cfg);
  const TrainingPairs val = pairs_for(manifest, Split::kValidation, names, cfg);

  Model<T> model;
  if (resume) {
    model = load_checkpoint<T>(*resume, cfg.model);
  } else {
    model = Model<T>(cfg.model);
    model.init_params(cfg.model.seed);
  }

  const fs::path dir = cfg.paths.checkpoint_dir;
  TrainSummary summary;
  summary.best_checkpoint = dir / "best.ckpt";
  summary.last_checkpoint = dir / "last.ckpt";
  summary.log = dir / "train_log.jsonl";
  FitOptions options;
  options.checkpoint_dir = dir;
  FitResult<T> result = fit(model, train, val, cfg.hyper, options);
  if (cfg.hyper.max_epochs == 0) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw FormatError("cannot create " + dir.string() + ": " + ec.message());
    save_checkpoint(result.best, summary.best_checkpoint);
    save_checkpoint(result.last, summary.last_checkpoint);
    std::ofstream log(summary.log, std::ios::trunc);
    if (!log) throw FormatError("cannot write " + summary.log.string());
  }
  summary.history = std::move(result.history);
  return summary;
}

template <typename T>
std::vector<fs::path> separate_as(const RunConfig& cfg, const fs::path& checkpoint,
                                  const AudioClip& mixture, const fs::path& out_dir) {
  const Model<T> model = load_checkpoint<T>(checkpoint, cfg.model);
  std::vector<std::string> manifest_sources;
  std::error_code ec;
  if (fs::exists(cfg.data.manifest, ec)) {
    manifest_sources = read_manifest(cfg.data.manifest).sources;
  }
  const auto names = target_names(cfg, manifest_sources);
  const auto clips = separate_clip(model, mixture, cfg.data.hop_test, cfg.data.overlap,
                                   cfg.data.infer_batch, cfg.data.scale_targets);
  fs::create_directories(out_dir, ec);
  if (ec) throw FormatError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  for (std::size_t l = 0; l < clips.size(); ++l) {
    written.push_back(out_dir / (names[l] + ".wav"));
    write_wav(clips[l], written.back());
  }
  return written;
}

}  // namespace

TrainSummary cmd_train(const RunConfig& config, const std::optional<fs::path>& resume) {
  config.validate();
  return config.precision == Precision::kDouble ? train_as<double>(config, resume)
                                                : train_as<float>(config, resume);
}

std::vector<fs::path> cmd_separate(const RunConfig& config, const fs::path& checkpoint,
                                   const fs::path& mixture, const fs::path& out_dir) {
  config.validate();
  const AudioClip clip = read_wav(mixture);
  return config.precision == Precision::kDouble
             ? separate_as<double>(config, checkpoint, clip, out_dir)
             : separate_as<float>(config, checkpoint, clip, out_dir);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> wav_stems(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") {
      const auto stem = entry.path().stem().string();
      if (stem != "mixture") names.push_back(stem);
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

EvalReport cmd_evaluate(const RunConfig& config, const fs::path& estimates_dir,
                        const fs::path& references_dir) {
  config.validate();
  if (!fs::is_directory(estimates_dir)) {
    throw ConfigError("estimates directory " + estimates_dir.string() + " not found");
  }
  if (!fs::is_directory(references_dir)) {
    throw ConfigError("references directory " + references_dir.string() + " not found");
  }
  std::optional<std::vector<std::string>> listed;
  if (fs::exists(references_dir / "manifest.json")) {
    listed = read_manifest(references_dir / "manifest.json").sources;
  }
  std::vector<std::string> songs;
  for (const auto& entry : fs::directory_iterator(estimates_dir)) {
    if (entry.is_directory()) songs.push_back(entry.path().filename().string());
  }
  std::sort(songs.begin(), songs.end());
  if (songs.empty()) {
    throw ConfigError("no song directories in " + estimates_dir.string());
  }

  EvalReport report;
  std::vector<EvalResult> results;
  for (const auto& song : songs) {
    const fs::path est_dir = estimates_dir / song;
    const fs::path ref_dir = references_dir / song;
    if (!fs::is_directory(ref_dir)) {
      throw ConfigError("song " + song + " has no reference directory in " +
                        references_dir.string());
    }
    const auto refs = listed ? *listed : wav_stems(ref_dir);
    const auto estimated = wav_stems(est_dir);
    for (const auto& e : estimated) {
      if (std::find(refs.begin(), refs.end(), e) == refs.end()) {
        throw ConfigError("song " + song + ": estimate " + e + ".wav has no reference");
      }
    }
    // Estimated sources first, in reference order, then the interferers.
    std::vector<std::string> order;
    for (const auto& r : refs) {
      if (std::find(estimated.begin(), estimated.end(), r) != estimated.end()) {
        order.push_back(r);
      }
    }
    if (order.empty()) {
      report.failures.push_back(song + ": no estimates");
      report.complete = false;
      continue;
    }
    const std::size_t scored = order.size();
    for (const auto& r : refs) {
      if (std::find(order.begin(), order.end(), r) == order.end()) order.push_back(r);
    }
    try {
      std::vector<AudioClip> est, ref;
      for (std::size_t i = 0; i < scored; ++i) {
        est.push_back(read_wav(est_dir / (order[i] + ".wav")));
      }
      for (const auto& r : order) ref.push_back(read_wav(ref_dir / (r + ".wav")));
      SongReport sr;
      sr.song = song;
      sr.sources.assign(order.begin(), order.begin() + static_cast<long>(scored));
      sr.result = evaluate_song(est, ref, config.eval.filter_taps);
      if (!report.songs.empty() && sr.sources != report.songs.front().sources) {
        throw ConfigError("song " + song + " estimates a different source set than " +
                          report.songs.front().song);
      }
      results.push_back(sr.result);
      report.songs.push_back(std::move(sr));
    } catch (const FormatError& e) {
      report.failures.push_back(song + ": " + e.what());
      report.complete = false;
    }
  }
  if (!results.empty()) {
    report.sources = report.songs.front().sources;
    report.median = aggregate_median(results);
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  using nlohmann::json;
  json songs = json::array();
  std::size_t taps = 0;
  for (const auto& s : report.songs) {
    taps = s.result.filter_len;
    for (std::size_t j = 0; j < s.sources.size(); ++j) {
      const auto& m = s.result.sources[j];
      songs.push_back({{"song", s.song}, {"source", s.sources[j]}, {"sdr", m.sdr},
                       {"isr", m.isr}, {"sir", m.sir}, {"sar", m.sar}});
    }
  }
  json median = json::array();
  if (report.median) {
    for (std::size_t j = 0; j < report.sources.size(); ++j) {
      const auto& m = report.median->sources[j];
      median.push_back({{"source", report.sources[j]}, {"sdr", m.sdr}, {"isr", m.isr},
                        {"sir", m.sir}, {"sar", m.sar}});
    }
  }
  return {{"complete", report.complete},
          {"filter_taps", taps},
          {"song_count", report.songs.size()},
          {"songs", songs},
          {"median", median},
          {"failures", report.failures}};
}

void write_report(const EvalReport& report, const fs::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write report " + path.string());
  out << to_json(report).dump(2) << "\n";
}

// ---------------------------------------------------------------------------

bool GradcheckReport::passed() const {
  return std::all_of(groups.begin(), groups.end(),
                     [&](const GradcheckGroup& g) { return g.max_rel_error < threshold; });
}

ModelConfig gradcheck_model_config() {
  ModelConfig c;
  c.segment_len = 32;
  c.in_channels = 2;
  c.num_sources = 1;
  c.encoder = {{LayerKind::kEncoderConv, {{2, 3}, {2, 5}}}};
  c.decoder = {{LayerKind::kDecoderTranspose, {{2, 3}, {2, 5}}}};
  c.output_filter_len = 5;
  return c;
}

namespace {

double batch_loss(Model<double> model, const Tensor3<double>& x, const Tensor3<double>& y) {
  Tape<double> tape;
  const auto out = model.forward(tape, tape.input(x), nullptr);
  return tape.l1_loss(out, y);
}

}  // namespace

GradcheckReport cmd_gradcheck(std::uint64_t seed, std::optional<OpKind> corrupt) {
  constexpr double kStep = 1e-5;
  constexpr std::size_t kBatch = 2;
  ModelConfig cfg = gradcheck_model_config();
  cfg.seed = seed;
  Model<double> model(cfg);
  model.init_params(seed);

  std::mt19937_64 rng(seed ^ 0xA5A5A5A5ULL);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  Tensor3<double> x(kBatch, cfg.in_channels, cfg.segment_len);
  for (auto& v : x.data()) v = normal(rng);

  // Targets sit at least 0.5 away from the initial output on every entry,
  // far from the kinks of |.| for steps of this size.
  Tensor3<double> y;
  {
    Model<double> probe = model;
    Tape<double> tape;
    y = tape.value(probe.forward(tape, tape.input(x), nullptr));
  }
  for (auto& v : y.data()) v += (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + unit(rng));

  Model<double> analytic = model;
  ModelGrads<double> grads(analytic);
  {
    Tape<double> tape;
    if (corrupt) tape.corrupt_backward_for_testing(*corrupt, 1.5);
    const auto out = analytic.forward(tape, tape.input(x), &grads);
    tape.l1_loss(out, y);
    tape.backward();
  }

  GradcheckReport report;
  const auto gviews = grads.views();
  const auto names = model.trainable();
  for (std::size_t g = 0; g < gviews.size(); ++g) {
    GradcheckGroup group{names[g].name, names[g].values.size(), 0.0};
    for (std::size_t k = 0; k < group.size; ++k) {
      Model<double> plus = model;
      plus.trainable()[g].values[k] += kStep;
      Model<double> minus = model;
      minus.trainable()[g].values[k] -= kStep;
      const double numeric =
          (batch_loss(std::move(plus), x, y) - batch_loss(std::move(minus), x, y)) /
          (2 * kStep);
      const double a = gviews[g].values[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      group.max_rel_error = std::max(group.max_rel_error, std::abs(a - numeric) / denom);
    }
    report.groups.push_back(std::move(group));
  }
  return report;
}

template std::vector<AudioClip> separate_clip<float>(const Model<float>&, const AudioClip&,
                                                     std::size_t, OverlapMode, std::size_t,
                                                     bool);
template std::vector<AudioClip> separate_clip<double>(const Model<double>&,
                                                      const AudioClip&, std::size_t,
                                                      OverlapMode, std::size_t, bool);

}  // namespace mrcae
