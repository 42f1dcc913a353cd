// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mrcae/model.h"

#include <cmath>
#include <random>
#include <string>

namespace mrcae {

std::size_t LayerSpec::out_channels() const {
  std::size_t total = 0;
  for (const auto& s : sets) total += s.num_filters;
  return total;
}

void ModelConfig::validate() const {
  if (segment_len == 0) throw ConfigError("model: segment_len must be >= 1");
  if (in_channels == 0) throw ConfigError("model: in_channels must be >= 1");
  if (num_sources == 0) throw ConfigError("model: num_sources must be >= 1");
  auto check_layers = [&](const std::vector<LayerSpec>& layers,
                          const char* part) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string where =
          std::string("model.") + part + "[" + std::to_string(i) + "]";
      if (layers[i].sets.empty()) throw ConfigError(where + ": no filter sets");
      for (const auto& s : layers[i].sets) {
        if (s.num_filters == 0) throw ConfigError(where + ": zero filters");
        if (s.filter_len == 0) throw ConfigError(where + ": zero filter length");
        if (s.filter_len > segment_len) {
          throw ConfigError(where + ": filter length " +
                            std::to_string(s.filter_len) +
                            " exceeds segment length " +
                            std::to_string(segment_len));
        }
      }
    }
  };
  check_layers(encoder, "encoder");
  check_layers(decoder, "decoder");
  if (output_filter_len == 0 || output_filter_len > segment_len) {
    throw ConfigError("model: output_filter_len " +
                      std::to_string(output_filter_len) +
                      " must be in [1, segment_len]");
  }
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  auto layer = [](LayerKind kind, std::vector<std::size_t> counts) {
    const std::size_t lengths[] = {5, 50, 256, 512, 1025};
    LayerSpec l;
    l.kind = kind;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      l.sets.push_back({counts[j], lengths[j]});
    }
    return l;
  };
  c.encoder = {layer(LayerKind::kEncoderConv, {20, 20, 20, 20, 20}),
               layer(LayerKind::kEncoderConv, {50, 25, 20, 20, 20})};
  c.decoder = {layer(LayerKind::kDecoderTranspose, {50, 25, 20, 20, 20}),
               layer(LayerKind::kDecoderTranspose, {20, 20, 20, 20, 20})};
  return c;
}

template <typename T>
std::size_t ModelLayer<T>::out_channels() const {
  std::size_t total = 0;
  for (const auto& s : sets) total += s.norm.channels();
  return total;
}

template <typename T>
Model<T>::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::size_t channels = config_.in_channels;
  auto add = [&](const LayerSpec& spec, LayerKind kind) {
    ModelLayer<T> layer;
    layer.kind = kind;
    layer.in_channels = channels;
    for (const auto& s : spec.sets) {
      FilterSetBlock<T> block;
      if (kind == LayerKind::kEncoderConv) {
        block.filters = FilterSetParams<T>(s.num_filters, channels,
                                           s.filter_len, s.num_filters);
      } else {
        // Transpose storage: maps `channels` inputs onto num_filters maps.
        block.filters = FilterSetParams<T>(channels, s.num_filters,
                                           s.filter_len, s.num_filters);
      }
      block.norm = BatchNormParams<T>(s.num_filters);
      layer.sets.push_back(std::move(block));
    }
    channels = spec.out_channels();
    layers_.push_back(std::move(layer));
  };
  for (const auto& l : config_.encoder) add(l, LayerKind::kEncoderConv);
  for (const auto& l : config_.decoder) add(l, LayerKind::kDecoderTranspose);
  const std::size_t out = config_.output_channels();
  output_ = FilterSetParams<T>(channels, out, config_.output_filter_len, out);
}

template <typename T>
std::vector<std::size_t> Model<T>::feature_map_counts() const {
  std::vector<std::size_t> counts;
  for (const auto& l : layers_) counts.push_back(l.out_channels());
  counts.push_back(output_.in_channels);
  return counts;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : trainable()) n += v.values.size();
  return n;
}

namespace {

// Uniform in [-limit, limit) from the top 53 bits of a 64-bit draw, so the
// stream is identical across standard libraries.
template <typename T>
void fill_uniform(std::vector<T>& values, double limit, std::mt19937_64& rng) {
  for (T& v : values) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = static_cast<T>((2.0 * u - 1.0) * limit);
  }
}

template <typename T>
void glorot(FilterSetParams<T>& p, std::mt19937_64& rng) {
  const double fan_sum =
      double(p.filter_len) * double(p.in_channels + p.num_filters);
  fill_uniform(p.weights, std::sqrt(6.0 / fan_sum), rng);
  std::fill(p.bias.begin(), p.bias.end(), T(0));
}

}  // namespace

template <typename T>
void Model<T>::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& layer : layers_) {
    for (auto& set : layer.sets) {
      glorot(set.filters, rng);
      set.norm = BatchNormParams<T>(set.norm.channels());
    }
  }
  glorot(output_, rng);
}

template <typename T>
void Model<T>::check_input(const Tensor3<T>& batch) const {
  if (batch.channels() != config_.in_channels ||
      batch.length() != config_.segment_len) {
    throw ConfigError("model input is " + std::to_string(batch.channels()) +
                      "x" + std::to_string(batch.length()) + ", expected " +
                      std::to_string(config_.in_channels) + "x" +
                      std::to_string(config_.segment_len));
  }
}

template <typename T>
Tensor3<T> Model<T>::infer(const Tensor3<T>& batch) const {
  check_input(batch);
  Tensor3<T> x = batch;
  for (const auto& layer : layers_) {
    std::vector<Tensor3<T>> parts;
    parts.reserve(layer.sets.size());
    for (const auto& set : layer.sets) {
      Tensor3<T> y = layer.kind == LayerKind::kEncoderConv
                         ? conv1d(x, set.filters)
                         : conv_transpose1d(x, set.filters);
      parts.push_back(elu(batchnorm_infer(y, set.norm)));
    }
    x = concat_channels<T>(parts);
  }
  return conv_transpose1d(x, output_);
}

template <typename T>
typename Tape<T>::Node Model<T>::forward(Tape<T>& tape,
                                         typename Tape<T>::Node input,
                                         ModelGrads<T>* grads) {
  check_input(tape.value(input));
  auto x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& layer = layers_[i];
    std::vector<typename Tape<T>::Node> parts;
    for (std::size_t j = 0; j < layer.sets.size(); ++j) {
      auto& set = layer.sets[j];
      FilterSetParams<T>* gf = grads ? &grads->filters()[i][j] : nullptr;
      BatchNormGrads<T>* gn = grads ? &grads->norms()[i][j] : nullptr;
      auto y = layer.kind == LayerKind::kEncoderConv
                   ? tape.conv1d(x, set.filters, gf)
                   : tape.conv_transpose1d(x, set.filters, gf);
      parts.push_back(tape.elu(tape.batchnorm(y, set.norm, gn)));
    }
    x = tape.concat_channels(parts);
  }
  return tape.conv_transpose1d(x, output_, grads ? &grads->output() : nullptr);
}

namespace {

std::string set_prefix(LayerKind kind, std::size_t layer_index,
                       std::size_t encoder_count, std::size_t set) {
  const bool enc = kind == LayerKind::kEncoderConv;
  const std::size_t idx = enc ? layer_index : layer_index - encoder_count;
  return std::string(enc ? "encoder" : "decoder") + std::to_string(idx) +
         ".set" + std::to_string(set);
}

template <typename T>
std::vector<std::uint32_t> filter_dims(const FilterSetParams<T>& p) {
  return {static_cast<std::uint32_t>(p.num_filters),
          static_cast<std::uint32_t>(p.in_channels),
          static_cast<std::uint32_t>(p.filter_len)};
}

template <typename V, typename M>
std::vector<TensorView<V>> collect(M& model, bool with_running) {
  std::vector<TensorView<V>> out;
  const std::size_t enc = model.config().encoder.size();
  auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (std::size_t j = 0; j < layers[i].sets.size(); ++j) {
      auto& set = layers[i].sets[j];
      const std::string p = set_prefix(layers[i].kind, i, enc, j);
      const auto ch = static_cast<std::uint32_t>(set.norm.channels());
      out.push_back({p + ".weight", filter_dims(set.filters),
                     std::span<V>(set.filters.weights)});
      out.push_back({p + ".bias", {static_cast<std::uint32_t>(set.filters.bias.size())},
                     std::span<V>(set.filters.bias)});
      out.push_back({p + ".bn.gamma", {ch}, std::span<V>(set.norm.gamma)});
      out.push_back({p + ".bn.beta", {ch}, std::span<V>(set.norm.beta)});
      if (with_running) {
        out.push_back({p + ".bn.running_mean", {ch},
                       std::span<V>(set.norm.running_mean)});
        out.push_back({p + ".bn.running_var", {ch},
                       std::span<V>(set.norm.running_var)});
      }
    }
  }
  auto& o = model.output();
  out.push_back({"output.weight", filter_dims(o), std::span<V>(o.weights)});
  out.push_back({"output.bias", {static_cast<std::uint32_t>(o.bias.size())},
                 std::span<V>(o.bias)});
  return out;
}

}  // namespace

template <typename T>
std::vector<TensorView<T>> Model<T>::trainable() {
  return collect<T>(*this, false);
}
template <typename T>
std::vector<TensorView<const T>> Model<T>::trainable() const {
  return collect<const T>(*this, false);
}
template <typename T>
std::vector<TensorView<T>> Model<T>::all_tensors() {
  return collect<T>(*this, true);
}
template <typename T>
std::vector<TensorView<const T>> Model<T>::all_tensors() const {
  return collect<const T>(*this, true);
}

template <typename T>
bool Model<T>::operator==(const Model& other) const {
  if (!(config_ == other.config_)) return false;
  auto a = all_tensors();
  auto b = other.all_tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].dims != b[i].dims ||
        !std::equal(a[i].values.begin(), a[i].values.end(),
                    b[i].values.begin(), b[i].values.end())) {
      return false;
    }
  }
  return true;
}

template <typename T>
ModelGrads<T>::ModelGrads(const Model<T>& model) {
  for (const auto& layer : model.layers()) {
    std::vector<FilterSetParams<T>> f;
    std::vector<BatchNormGrads<T>> n;
    for (const auto& set : layer.sets) {
      f.push_back(zeros_like(set.filters));
      n.emplace_back(set.norm.channels());
    }
    filters_.push_back(std::move(f));
    norms_.push_back(std::move(n));
  }
  output_ = zeros_like(model.output());
  for (const auto& v : model.trainable()) names_.push_back(v.name);
}

template <typename T>
void ModelGrads<T>::zero() {
  for (auto& v : views()) std::fill(v.values.begin(), v.values.end(), T(0));
}

template <typename T>
std::vector<TensorView<T>> ModelGrads<T>::views() {
  std::vector<TensorView<T>> out;
  std::size_t name = 0;
  for (std::size_t i = 0; i < filters_.size(); ++i) {
    for (std::size_t j = 0; j < filters_[i].size(); ++j) {
      auto& f = filters_[i][j];
      auto& n = norms_[i][j];
      out.push_back({names_[name++], filter_dims(f), std::span<T>(f.weights)});
      out.push_back({names_[name++], {static_cast<std::uint32_t>(f.bias.size())},
                     std::span<T>(f.bias)});
      out.push_back({names_[name++], {static_cast<std::uint32_t>(n.gamma.size())},
                     std::span<T>(n.gamma)});
      out.push_back({names_[name++], {static_cast<std::uint32_t>(n.beta.size())},
                     std::span<T>(n.beta)});
    }
  }
  out.push_back({names_[name++], filter_dims(output_),
                 std::span<T>(output_.weights)});
  out.push_back({names_[name++], {static_cast<std::uint32_t>(output_.bias.size())},
                 std::span<T>(output_.bias)});
  return out;
}

template <typename T>
Tensor3<T> forward(Model<T>& model, const Tensor3<T>& batch, Mode mode) {
  if (mode == Mode::kInfer) return model.infer(batch);
  Tape<T> tape;
  auto out = model.forward(tape, tape.input(batch), nullptr);
  return tape.value(out);
}

template <typename T>
std::pair<double, ModelGrads<T>> loss_and_gradients(Model<T>& model,
                                                    const Tensor3<T>& batch,
                                                    const Tensor3<T>& targets) {
  ModelGrads<T> grads(model);
  Tape<T> tape;
  auto out = model.forward(tape, tape.input(batch), &grads);
  if (!tape.value(out).same_shape(targets)) {
    throw ConfigError("loss_and_gradients: targets shape mismatch");
  }
  const double loss = tape.l1_loss(out, targets);
  tape.backward();
  return {loss, std::move(grads)};
}

template <typename T, typename U>
Model<T> model_cast(const Model<U>& model) {
  Model<T> out(model.config());
  auto dst = out.all_tensors();
  auto src = model.all_tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (std::size_t k = 0; k < dst[i].values.size(); ++k) {
      dst[i].values[k] = static_cast<T>(src[i].values[k]);
    }
  }
  auto& dl = out.layers();
  const auto& sl = model.layers();
  for (std::size_t i = 0; i < dl.size(); ++i) {
    for (std::size_t j = 0; j < dl[i].sets.size(); ++j) {
      dl[i].sets[j].norm.epsilon = sl[i].sets[j].norm.epsilon;
      dl[i].sets[j].norm.momentum = sl[i].sets[j].norm.momentum;
    }
  }
  return out;
}

#define MRCAE_INSTANTIATE_MODEL(T)                                            \
  template struct ModelLayer<T>;                                              \
  template class Model<T>;                                                    \
  template class ModelGrads<T>;                                               \
  template Tensor3<T> forward<T>(Model<T>&, const Tensor3<T>&, Mode);         \
  template std::pair<double, ModelGrads<T>> loss_and_gradients<T>(            \
      Model<T>&, const Tensor3<T>&, const Tensor3<T>&);

MRCAE_INSTANTIATE_MODEL(float)
MRCAE_INSTANTIATE_MODEL(double)

template Model<float> model_cast<float, float>(const Model<float>&);
template Model<float> model_cast<float, double>(const Model<double>&);
template Model<double> model_cast<double, float>(const Model<float>&);
template Model<double> model_cast<double, double>(const Model<double>&);

#undef MRCAE_INSTANTIATE_MODEL

}  // namespace mrcae
