// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mrcae/config.h"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <string>

#include "mrcae/errors.h"

namespace mrcae {

using nlohmann::json;

namespace {

void check_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  check_object(j, where);
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void read_path(const json& j, const char* key, std::filesystem::path& out,
               const std::string& where) {
  std::string s = out.string();
  read(j, key, s, where);
  out = s;
}

json layers_to_json(const std::vector<LayerSpec>& layers) {
  json arr = json::array();
  for (const auto& l : layers) {
    json sets = json::array();
    for (const auto& s : l.sets) {
      sets.push_back({{"filters", s.num_filters}, {"length", s.filter_len}});
    }
    arr.push_back({{"sets", sets}});
  }
  return arr;
}

std::vector<LayerSpec> layers_from_json(const json& j, LayerKind kind,
                                        const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of layers");
  std::vector<LayerSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    check_keys(j[i], {"sets"}, w);
    LayerSpec layer;
    layer.kind = kind;
    const json& sets = j[i].at("sets");
    if (!sets.is_array()) throw ConfigError(w + ".sets: expected an array");
    for (std::size_t k = 0; k < sets.size(); ++k) {
      const std::string ws = w + ".sets[" + std::to_string(k) + "]";
      check_keys(sets[k], {"filters", "length"}, ws);
      SetSpec s;
      read(sets[k], "filters", s.num_filters, ws);
      read(sets[k], "length", s.filter_len, ws);
      layer.sets.push_back(s);
    }
    out.push_back(std::move(layer));
  }
  return out;
}

const char* kind_name(SourceKind k) {
  return k == SourceKind::kToneStack ? "tone_stack" : "filtered_noise";
}

}  // namespace

SynthSpec SynthConfig::default_spec() {
  SynthSpec spec;
  spec.seed = 7;
  spec.duration = 8.0;
  spec.sample_rate = 16000.0;
  spec.sources = {
      {"tones", SourceKind::kToneStack, 200.0, 400.0, {0.9, 0.3}, 0.1},
      {"noise", SourceKind::kFilteredNoise, 2000.0, 6000.0, {0.3, 0.9}, 0.1},
  };
  return spec;
}

void RunConfig::validate() const {
  model.validate();
  hyper.validate();
  if (data.seg_len != model.segment_len) {
    throw ConfigError("data.seg_len (" + std::to_string(data.seg_len) +
                      ") differs from model.segment_len (" +
                      std::to_string(model.segment_len) + ")");
  }
  if (data.hop_test == 0 || data.hop_train == 0) {
    throw ConfigError("data: hops must be >= 1");
  }
  if (data.hop_test > data.seg_len) {
    throw ConfigError("data.hop_test must not exceed seg_len");
  }
  if (data.infer_batch == 0) throw ConfigError("data.infer_batch must be >= 1");
  if (!data.targets.empty() && data.targets.size() != model.num_sources) {
    throw ConfigError("data.targets must list model.num_sources names");
  }
  if (eval.filter_taps == 0) throw ConfigError("eval.filter_taps must be >= 1");
  if (synth.songs < 3) throw ConfigError("synth.songs must be >= 3");
  if (!(synth.test_ratio > 0 && synth.test_ratio < 1) ||
      !(synth.val_ratio > 0 && synth.val_ratio < 1)) {
    throw ConfigError("synth: split ratios must lie in (0, 1)");
  }
  synth.spec.validate();
}

void RunConfig::set_seed(std::uint64_t seed) {
  model.seed = seed;
  hyper.seed = seed;
  synth.spec.seed = seed;
}

json to_json(const ModelConfig& c) {
  return {{"segment_len", c.segment_len},
          {"in_channels", c.in_channels},
          {"num_sources", c.num_sources},
          {"encoder", layers_to_json(c.encoder)},
          {"decoder", layers_to_json(c.decoder)},
          {"output_filter_len", c.output_filter_len},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  const std::string w = "model";
  check_keys(j, {"segment_len", "in_channels", "num_sources", "encoder",
                 "decoder", "output_filter_len", "seed"},
             w);
  ModelConfig c = ModelConfig::full_scale();
  read(j, "segment_len", c.segment_len, w);
  read(j, "in_channels", c.in_channels, w);
  read(j, "num_sources", c.num_sources, w);
  read(j, "output_filter_len", c.output_filter_len, w);
  read(j, "seed", c.seed, w);
  if (j.contains("encoder")) {
    c.encoder = layers_from_json(j["encoder"], LayerKind::kEncoderConv, w + ".encoder");
  }
  if (j.contains("decoder")) {
    c.decoder = layers_from_json(j["decoder"], LayerKind::kDecoderTranspose, w + ".decoder");
  }
  return c;
}

json to_json(const RunConfig& c) {
  json sources = json::array();
  for (const auto& r : c.synth.spec.sources) {
    sources.push_back({{"name", r.name},
                       {"kind", kind_name(r.kind)},
                       {"band", {r.band_lo, r.band_hi}},
                       {"pan", r.pan},
                       {"level", r.level}});
  }
  return {
      {"model", to_json(c.model)},
      {"hyper",
       {{"lr", c.hyper.lr},
        {"beta1", c.hyper.beta1},
        {"beta2", c.hyper.beta2},
        {"eps", c.hyper.eps},
        {"batch_size", c.hyper.batch_size},
        {"max_epochs", c.hyper.max_epochs},
        {"plateau_patience", c.hyper.plateau_patience},
        {"lr_reduce_factor", c.hyper.lr_reduce_factor},
        {"min_lr", c.hyper.min_lr},
        {"seed", c.hyper.seed}}},
      {"data",
       {{"manifest", c.data.manifest.string()},
        {"seg_len", c.data.seg_len},
        {"hop_test", c.data.hop_test},
        {"hop_train", c.data.hop_train},
        {"scale_targets", c.data.scale_targets},
        {"overlap", c.data.overlap == OverlapMode::kAverage ? "average" : "sum"},
        {"targets", c.data.targets},
        {"infer_batch", c.data.infer_batch}}},
      {"eval", {{"filter_taps", c.eval.filter_taps}}},
      {"paths",
       {{"checkpoint_dir", c.paths.checkpoint_dir.string()},
        {"report_dir", c.paths.report_dir.string()}}},
      {"synth",
       {{"songs", c.synth.songs},
        {"test_ratio", c.synth.test_ratio},
        {"val_ratio", c.synth.val_ratio},
        {"seed", c.synth.spec.seed},
        {"duration", c.synth.spec.duration},
        {"sample_rate", c.synth.spec.sample_rate},
        {"sources", sources}}},
      {"precision", c.precision == Precision::kSingle ? "single" : "double"},
  };
}

RunConfig run_config_from_json(const json& j) {
  check_keys(j, {"model", "hyper", "data", "eval", "paths", "synth", "precision"},
             "config");
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  if (j.contains("hyper")) {
    const json& h = j["hyper"];
    const std::string w = "hyper";
    check_keys(h, {"lr", "beta1", "beta2", "eps", "batch_size", "max_epochs",
                   "plateau_patience", "lr_reduce_factor", "min_lr", "seed"},
               w);
    read(h, "lr", c.hyper.lr, w);
    read(h, "beta1", c.hyper.beta1, w);
    read(h, "beta2", c.hyper.beta2, w);
    read(h, "eps", c.hyper.eps, w);
    read(h, "batch_size", c.hyper.batch_size, w);
    read(h, "max_epochs", c.hyper.max_epochs, w);
    read(h, "plateau_patience", c.hyper.plateau_patience, w);
    read(h, "lr_reduce_factor", c.hyper.lr_reduce_factor, w);
    read(h, "min_lr", c.hyper.min_lr, w);
    read(h, "seed", c.hyper.seed, w);
  }
  c.data.seg_len = c.model.segment_len;
  if (j.contains("data")) {
    const json& d = j["data"];
    const std::string w = "data";
    check_keys(d, {"manifest", "seg_len", "hop_test", "hop_train", "scale_targets",
                   "overlap", "targets", "infer_batch"},
               w);
    read_path(d, "manifest", c.data.manifest, w);
    read(d, "seg_len", c.data.seg_len, w);
    read(d, "hop_test", c.data.hop_test, w);
    read(d, "hop_train", c.data.hop_train, w);
    read(d, "scale_targets", c.data.scale_targets, w);
    read(d, "targets", c.data.targets, w);
    read(d, "infer_batch", c.data.infer_batch, w);
    std::string overlap = "average";
    read(d, "overlap", overlap, w);
    if (overlap == "average") {
      c.data.overlap = OverlapMode::kAverage;
    } else if (overlap == "sum") {
      c.data.overlap = OverlapMode::kSum;
    } else {
      throw ConfigError("data.overlap: expected 'average' or 'sum'");
    }
  }
  if (j.contains("eval")) {
    check_keys(j["eval"], {"filter_taps"}, "eval");
    read(j["eval"], "filter_taps", c.eval.filter_taps, "eval");
  }
  if (j.contains("paths")) {
    check_keys(j["paths"], {"checkpoint_dir", "report_dir"}, "paths");
    read_path(j["paths"], "checkpoint_dir", c.paths.checkpoint_dir, "paths");
    read_path(j["paths"], "report_dir", c.paths.report_dir, "paths");
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    const std::string w = "synth";
    check_keys(s, {"songs", "test_ratio", "val_ratio", "seed", "duration",
                   "sample_rate", "sources"},
               w);
    read(s, "songs", c.synth.songs, w);
    read(s, "test_ratio", c.synth.test_ratio, w);
    read(s, "val_ratio", c.synth.val_ratio, w);
    read(s, "seed", c.synth.spec.seed, w);
    read(s, "duration", c.synth.spec.duration, w);
    read(s, "sample_rate", c.synth.spec.sample_rate, w);
    if (s.contains("sources")) {
      c.synth.spec.sources.clear();
      const json& arr = s["sources"];
      if (!arr.is_array()) throw ConfigError("synth.sources: expected an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string ws = "synth.sources[" + std::to_string(i) + "]";
        check_keys(arr[i], {"name", "kind", "band", "pan", "level"}, ws);
        SourceRecipe r;
        read(arr[i], "name", r.name, ws);
        std::string kind = "tone_stack";
        read(arr[i], "kind", kind, ws);
        if (kind == "tone_stack") {
          r.kind = SourceKind::kToneStack;
        } else if (kind == "filtered_noise") {
          r.kind = SourceKind::kFilteredNoise;
        } else {
          throw ConfigError(ws + ".kind: expected 'tone_stack' or 'filtered_noise'");
        }
        std::vector<double> band = {r.band_lo, r.band_hi};
        read(arr[i], "band", band, ws);
        if (band.size() != 2) throw ConfigError(ws + ".band: expected [lo, hi]");
        r.band_lo = band[0];
        r.band_hi = band[1];
        read(arr[i], "pan", r.pan, ws);
        read(arr[i], "level", r.level, ws);
        if (r.name.empty()) r.name = "source" + std::to_string(i);
        c.synth.spec.sources.push_back(std::move(r));
      }
    }
  }
  if (j.contains("precision")) {
    std::string p;
    read(j, "precision", p, "config");
    if (p == "single") {
      c.precision = Precision::kSingle;
    } else if (p == "double") {
      c.precision = Precision::kDouble;
    } else {
      throw ConfigError("precision: expected 'single' or 'double'");
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace mrcae
