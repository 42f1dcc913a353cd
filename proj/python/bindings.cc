// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mrcae/audio.h"
#include "mrcae/bss_eval.h"
#include "mrcae/checkpoint.h"
#include "mrcae/datapipe.h"
#include "mrcae/errors.h"
#include "mrcae/ops.h"
#include "mrcae/pipeline.h"

namespace py = pybind11;
using mrcae::AudioClip;
using mrcae::Tensor3;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor3<double> to_tensor(const Array& a) {
  if (a.ndim() != 3) throw py::value_error("expected a (batch, channels, length) array");
  Tensor3<double> t(a.shape(0), a.shape(1), a.shape(2));
  std::copy(a.data(), a.data() + a.size(), t.data().begin());
  return t;
}

Array from_tensor(const Tensor3<double>& t) {
  Array out({t.batch(), t.channels(), t.length()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

AudioClip to_clip(const Array& a, double rate) {
  if (a.ndim() != 2) throw py::value_error("expected a (channels, samples) array");
  AudioClip clip(rate, a.shape(0), a.shape(1));
  for (py::ssize_t c = 0; c < a.shape(0); ++c) {
    std::copy(a.data(c, 0), a.data(c, 0) + a.shape(1), clip.samples[c].begin());
  }
  return clip;
}

Array from_clip(const AudioClip& clip) {
  Array out({clip.channels(), clip.length()});
  for (std::size_t c = 0; c < clip.channels(); ++c) {
    std::copy(clip.samples[c].begin(), clip.samples[c].end(), out.mutable_data(c, 0));
  }
  return out;
}

mrcae::FilterSetParams<double> filters(const Array& w, const Array& bias) {
  if (w.ndim() != 3 || bias.ndim() != 1) {
    throw py::value_error("weights must be (filters, channels, length), bias 1-D");
  }
  mrcae::FilterSetParams<double> p(w.shape(0), w.shape(1), w.shape(2), bias.shape(0));
  std::copy(w.data(), w.data() + w.size(), p.weights.begin());
  std::copy(bias.data(), bias.data() + bias.size(), p.bias.begin());
  return p;
}

py::dict metrics_dict(const mrcae::SourceMetrics& m) {
  py::dict d;
  d["sdr"] = m.sdr;
  d["isr"] = m.isr;
  d["sir"] = m.sir;
  d["sar"] = m.sar;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-resolution convolutional auto-encoder for audio source separation";

  py::register_exception<mrcae::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<mrcae::FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<mrcae::NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "conv1d",
      [](const Array& x, const Array& w, const Array& b) {
        return from_tensor(mrcae::conv1d(to_tensor(x), filters(w, b)));
      },
      py::arg("x"), py::arg("weights"), py::arg("bias"),
      "Same-padded multi-channel correlation; weights (K, C, a), bias (K,).");
  m.def(
      "conv_transpose1d",
      [](const Array& u, const Array& w, const Array& b) {
        return from_tensor(mrcae::conv_transpose1d(to_tensor(u), filters(w, b)));
      },
      py::arg("u"), py::arg("weights"), py::arg("bias"),
      "Adjoint of conv1d with the same (K, C, a) weights plus a (C,) bias.");

  m.def(
      "segment",
      [](const Array& clip, std::size_t seg_len, std::size_t hop) {
        return from_tensor(mrcae::segment(to_clip(clip, 1.0), seg_len, hop).segments);
      },
      py::arg("clip"), py::arg("seg_len"), py::arg("hop"));
  m.def(
      "overlap_add",
      [](const Array& segments, std::size_t total_len, std::size_t hop, bool average) {
        mrcae::SegmentBatch batch;
        batch.segments = to_tensor(segments);
        for (std::size_t i = 0; i < batch.segments.batch(); ++i) batch.offsets.push_back(i * hop);
        batch.sample_rate = 1.0;
        return from_clip(mrcae::overlap_add(
            batch, total_len, average ? mrcae::OverlapMode::kAverage : mrcae::OverlapMode::kSum));
      },
      py::arg("segments"), py::arg("total_len"), py::arg("hop"), py::arg("average") = true);

  m.def(
      "read_wav",
      [](const std::filesystem::path& path) {
        const AudioClip clip = mrcae::read_wav(path);
        return py::make_tuple(from_clip(clip), clip.sample_rate);
      },
      py::arg("path"), "Returns (samples[channels, n], sample_rate).");
  m.def(
      "write_wav",
      [](const std::filesystem::path& path, const Array& samples, double rate) {
        mrcae::write_wav(to_clip(samples, rate), path);
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate"));

  m.def(
      "bss_eval",
      [](const std::vector<Array>& estimates, const std::vector<Array>& references,
         std::size_t taps) {
        std::vector<AudioClip> est, ref;
        for (const auto& e : estimates) est.push_back(to_clip(e, 1.0));
        for (const auto& r : references) ref.push_back(to_clip(r, 1.0));
        py::list out;
        for (const auto& s : mrcae::evaluate_song(est, ref, taps).sources) {
          out.append(metrics_dict(s));
        }
        return out;
      },
      py::arg("estimates"), py::arg("references"), py::arg("taps") = mrcae::kDefaultFilterTaps,
      "SDR/ISR/SIR/SAR in dB for each estimate, one dict per source.");

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        const auto report = mrcae::cmd_gradcheck(seed);
        py::list groups;
        for (const auto& g : report.groups) groups.append(py::make_tuple(g.name, g.size, g.max_rel_error));
        return py::make_tuple(report.passed(), groups);
      },
      py::arg("seed") = 0, "Returns (passed, [(group, size, max_rel_error), ...]).");

  m.def(
      "synth",
      [](std::uint64_t seed, double duration, double sample_rate) {
        mrcae::SynthSpec spec = mrcae::SynthConfig::default_spec();
        spec.seed = seed;
        spec.duration = duration;
        spec.sample_rate = sample_rate;
        const auto song = mrcae::synth_dataset(spec);
        py::dict sources;
        for (std::size_t i = 0; i < song.sources.size(); ++i) {
          sources[py::str(spec.sources[i].name)] = from_clip(song.sources[i]);
        }
        return py::make_tuple(from_clip(song.mixture), sources);
      },
      py::arg("seed") = 0, py::arg("duration") = 1.0, py::arg("sample_rate") = 16000.0,
      "Synthetic two-source stereo song: (mixture, {name: source}).");

  m.def(
      "separate",
      [](const std::filesystem::path& checkpoint, const Array& mixture, std::size_t hop,
         std::size_t infer_batch) {
        const auto model = mrcae::load_checkpoint<float>(checkpoint);
        py::list out;
        for (const auto& clip : mrcae::separate_clip(model, to_clip(mixture, 1.0), hop,
                                                     mrcae::OverlapMode::kAverage, infer_batch)) {
          out.append(from_clip(clip));
        }
        return out;
      },
      py::arg("checkpoint"), py::arg("mixture"), py::arg("hop") = 16,
      py::arg("infer_batch") = 256, "One (channels, n) estimate per separated source.");
}
