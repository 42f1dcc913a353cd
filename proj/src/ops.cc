// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mrcae/ops.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace mrcae {

template <typename T>
bool all_finite(std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
void require_finite(std::span<const T> values, const char* what) {
  if (!all_finite(values)) {
    throw NumericError(std::string("non-finite value in ") + what);
  }
}

template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);
template void require_finite<float>(std::span<const float>, const char*);
template void require_finite<double>(std::span<const double>, const char*);

namespace {

// Valid output index range [lo, hi) for y[t] += w * x[t + shift] with both
// rows of length n.
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> shifted_range(
    std::ptrdiff_t n, std::ptrdiff_t shift) {
  return {std::max<std::ptrdiff_t>(0, -shift),
          std::min<std::ptrdiff_t>(n, n - shift)};
}

template <typename T>
inline void axpy(T a, const T* x, T* y, std::ptrdiff_t n) {
  for (std::ptrdiff_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Eight independent partial sums combined in a fixed order; vectorizes
// without reassociation flags and stays deterministic.
template <typename T>
inline T dot(const T* a, const T* b, std::ptrdiff_t n) {
  T acc[8] = {};
  std::ptrdiff_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// y[b][k][t] += sum_{c,tau} w[k][c][tau] * x[b][c][t + tau - left]
template <typename T>
void correlate_into(const Tensor3<T>& x, const FilterSetParams<T>& p,
                    Tensor3<T>& y) {
  const auto n = static_cast<std::ptrdiff_t>(x.length());
  const auto left = static_cast<std::ptrdiff_t>(same_pad_left(p.filter_len));
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t k = 0; k < p.num_filters; ++k) {
      T* out = y.row(b, k).data();
      for (std::size_t c = 0; c < p.in_channels; ++c) {
        const T* in = x.row(b, c).data();
        for (std::size_t tau = 0; tau < p.filter_len; ++tau) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(tau) - left;
          auto [lo, hi] = shifted_range(n, shift);
          if (lo >= hi) continue;
          axpy(p.w(k, c, tau), in + lo + shift, out + lo, hi - lo);
        }
      }
    }
  }
}

// x[b][c][s] += sum_{k,tau} w[k][c][tau] * u[b][k][s + left - tau]
template <typename T>
void adjoint_into(const Tensor3<T>& u, const FilterSetParams<T>& p,
                  Tensor3<T>& x) {
  const auto n = static_cast<std::ptrdiff_t>(u.length());
  const auto left = static_cast<std::ptrdiff_t>(same_pad_left(p.filter_len));
  for (std::size_t b = 0; b < u.batch(); ++b) {
    for (std::size_t c = 0; c < p.in_channels; ++c) {
      T* out = x.row(b, c).data();
      for (std::size_t k = 0; k < p.num_filters; ++k) {
        const T* in = u.row(b, k).data();
        for (std::size_t tau = 0; tau < p.filter_len; ++tau) {
          const std::ptrdiff_t shift = left - static_cast<std::ptrdiff_t>(tau);
          auto [lo, hi] = shifted_range(n, shift);
          if (lo >= hi) continue;
          axpy(p.w(k, c, tau), in + lo + shift, out + lo, hi - lo);
        }
      }
    }
  }
}

// gw[k][c][tau] += sum_{b,t} g[b][k][t] * x[b][c][t + tau - left]
template <typename T>
void weight_grad_into(const Tensor3<T>& g, const Tensor3<T>& x,
                      FilterSetParams<T>& gw) {
  const auto n = static_cast<std::ptrdiff_t>(x.length());
  const auto left = static_cast<std::ptrdiff_t>(same_pad_left(gw.filter_len));
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t k = 0; k < gw.num_filters; ++k) {
      const T* gk = g.row(b, k).data();
      for (std::size_t c = 0; c < gw.in_channels; ++c) {
        const T* xc = x.row(b, c).data();
        for (std::size_t tau = 0; tau < gw.filter_len; ++tau) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(tau) - left;
          auto [lo, hi] = shifted_range(n, shift);
          if (lo >= hi) continue;
          gw.w(k, c, tau) += dot(gk + lo, xc + lo + shift, hi - lo);
        }
      }
    }
  }
}

template <typename T>
void add_bias(Tensor3<T>& y, const std::vector<T>& bias) {
  for (std::size_t b = 0; b < y.batch(); ++b) {
    for (std::size_t c = 0; c < y.channels(); ++c) {
      for (T& v : y.row(b, c)) v += bias[c];
    }
  }
}

template <typename T>
void bias_grad_into(const Tensor3<T>& g, std::vector<T>& gb) {
  for (std::size_t b = 0; b < g.batch(); ++b) {
    for (std::size_t c = 0; c < g.channels(); ++c) {
      auto r = g.row(b, c);
      T s = 0;
      for (T v : r) s += v;
      gb[c] += s;
    }
  }
}

template <typename T>
void check_filter_set(const FilterSetParams<T>& p, std::size_t bias_len,
                      const char* op) {
  if (p.num_filters == 0 || p.in_channels == 0 || p.filter_len == 0) {
    throw ConfigError(std::string(op) + ": empty filter set");
  }
  if (p.weights.size() != p.num_filters * p.in_channels * p.filter_len ||
      p.bias.size() != bias_len) {
    throw ConfigError(std::string(op) + ": parameter buffers mis-sized");
  }
}

struct BatchNormCache {
  std::vector<double> inv_std;
};

template <typename T>
Tensor3<T> batchnorm_train(const Tensor3<T>& x, BatchNormParams<T>& p,
                           BatchNormCache* cache, Tensor3<T>* xhat_out) {
  const std::size_t channels = x.channels();
  const double count = static_cast<double>(x.batch() * x.length());
  Tensor3<T> y(x.batch(), channels, x.length());
  if (xhat_out) *xhat_out = Tensor3<T>(x.batch(), channels, x.length());
  if (cache) cache->inv_std.assign(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0;
    for (std::size_t b = 0; b < x.batch(); ++b) {
      for (T v : x.row(b, c)) sum += v;
    }
    const double mean = sum / count;
    double sq = 0;
    for (std::size_t b = 0; b < x.batch(); ++b) {
      for (T v : x.row(b, c)) sq += (v - mean) * (v - mean);
    }
    const double var = sq / count;
    const double inv_std = 1.0 / std::sqrt(var + p.epsilon);
    if (cache) cache->inv_std[c] = inv_std;
    const double g = p.gamma[c];
    const double be = p.beta[c];
    for (std::size_t b = 0; b < x.batch(); ++b) {
      auto in = x.row(b, c);
      auto out = y.row(b, c);
      for (std::size_t t = 0; t < in.size(); ++t) {
        const double xh = (in[t] - mean) * inv_std;
        if (xhat_out) (*xhat_out)(b, c, t) = static_cast<T>(xh);
        out[t] = static_cast<T>(g * xh + be);
      }
    }
    p.running_mean[c] = static_cast<T>(p.momentum * p.running_mean[c] +
                                       (1.0 - p.momentum) * mean);
    p.running_var[c] = static_cast<T>(p.momentum * p.running_var[c] +
                                      (1.0 - p.momentum) * var);
  }
  return y;
}

template <typename T>
void check_batchnorm(const Tensor3<T>& x, const BatchNormParams<T>& p) {
  if (x.channels() == 0) throw ConfigError("batchnorm: zero channels");
  const std::size_t c = x.channels();
  if (p.gamma.size() != c || p.beta.size() != c ||
      p.running_mean.size() != c || p.running_var.size() != c) {
    throw ConfigError("batchnorm: parameters sized " +
                      std::to_string(p.gamma.size()) + ", input has " +
                      std::to_string(c) + " channels");
  }
}

}  // namespace

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConv1d: return "conv1d";
    case OpKind::kConvTranspose1d: return "conv_transpose1d";
    case OpKind::kBatchNorm: return "batchnorm";
    case OpKind::kElu: return "elu";
    case OpKind::kConcat: return "concat_channels";
    case OpKind::kL1Loss: return "l1_loss";
  }
  return "unknown";
}

template <typename T>
Tensor3<T> conv1d(const Tensor3<T>& input, const FilterSetParams<T>& params) {
  check_filter_set(params, params.num_filters, "conv1d");
  if (input.channels() != params.in_channels) {
    throw ConfigError("conv1d: input has " + std::to_string(input.channels()) +
                      " channels, filters expect " +
                      std::to_string(params.in_channels));
  }
  require_finite(input.data(), "conv1d input");
  Tensor3<T> out(input.batch(), params.num_filters, input.length());
  add_bias(out, params.bias);
  correlate_into(input, params, out);
  return out;
}

template <typename T>
Tensor3<T> conv_transpose1d(const Tensor3<T>& input,
                            const FilterSetParams<T>& params) {
  check_filter_set(params, params.in_channels, "conv_transpose1d");
  if (input.channels() != params.num_filters) {
    throw ConfigError("conv_transpose1d: input has " +
                      std::to_string(input.channels()) +
                      " channels, filters expect " +
                      std::to_string(params.num_filters));
  }
  require_finite(input.data(), "conv_transpose1d input");
  Tensor3<T> out(input.batch(), params.in_channels, input.length());
  add_bias(out, params.bias);
  adjoint_into(input, params, out);
  return out;
}

template <typename T>
void conv1d_backward(const Tensor3<T>& input, const FilterSetParams<T>& params,
                     const Tensor3<T>& grad_out, Tensor3<T>* grad_in,
                     FilterSetParams<T>* grad_params) {
  if (grad_in) adjoint_into(grad_out, params, *grad_in);
  if (grad_params) {
    weight_grad_into(grad_out, input, *grad_params);
    bias_grad_into(grad_out, grad_params->bias);
  }
}

template <typename T>
void conv_transpose1d_backward(const Tensor3<T>& input,
                               const FilterSetParams<T>& params,
                               const Tensor3<T>& grad_out, Tensor3<T>* grad_in,
                               FilterSetParams<T>* grad_params) {
  if (grad_in) correlate_into(grad_out, params, *grad_in);
  if (grad_params) {
    weight_grad_into(input, grad_out, *grad_params);
    bias_grad_into(grad_out, grad_params->bias);
  }
}

template <typename T>
Tensor3<T> batchnorm(const Tensor3<T>& input, BatchNormParams<T>& params,
                     Mode mode) {
  if (mode == Mode::kInfer) return batchnorm_infer(input, params);
  check_batchnorm(input, params);
  return batchnorm_train<T>(input, params, nullptr, nullptr);
}

template <typename T>
Tensor3<T> batchnorm_infer(const Tensor3<T>& input,
                           const BatchNormParams<T>& params) {
  check_batchnorm(input, params);
  Tensor3<T> out(input.batch(), input.channels(), input.length());
  for (std::size_t c = 0; c < input.channels(); ++c) {
    const double scale =
        params.gamma[c] / std::sqrt(double(params.running_var[c]) + params.epsilon);
    const double mean = params.running_mean[c];
    const double beta = params.beta[c];
    for (std::size_t b = 0; b < input.batch(); ++b) {
      auto in = input.row(b, c);
      auto o = out.row(b, c);
      for (std::size_t t = 0; t < in.size(); ++t) {
        o[t] = static_cast<T>((in[t] - mean) * scale + beta);
      }
    }
  }
  return out;
}

template <typename T>
Tensor3<T> elu(const Tensor3<T>& input) {
  Tensor3<T> out(input.batch(), input.channels(), input.length());
  auto in = input.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    o[i] = in[i] > T(0) ? in[i] : std::expm1(in[i]);
  }
  return out;
}

template <typename T>
double l1_loss(const Tensor3<T>& pred, const Tensor3<T>& target) {
  if (!pred.same_shape(target)) throw ConfigError("l1_loss: shape mismatch");
  auto p = pred.data();
  auto t = target.data();
  double sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sum += std::abs(double(p[i]) - double(t[i]));
  }
  return sum;
}

template <typename T>
Tensor3<T> concat_channels(std::span<const Tensor3<T>> parts) {
  if (parts.empty()) throw ConfigError("concat_channels: no parts");
  const std::size_t batch = parts[0].batch();
  const std::size_t length = parts[0].length();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.batch() != batch || p.length() != length) {
      throw ConfigError("concat_channels: batch or length mismatch");
    }
    channels += p.channels();
  }
  Tensor3<T> out(batch, channels, length);
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      for (std::size_t c = 0; c < p.channels(); ++c) {
        std::ranges::copy(p.row(b, c), out.row(b, c0 + c).begin());
      }
      c0 += p.channels();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
typename Tape<T>::Node Tape<T>::push(Tensor3<T> value) {
  values_.push_back(std::move(value));
  grads_.emplace_back();
  return values_.size() - 1;
}

template <typename T>
typename Tape<T>::Node Tape<T>::input(Tensor3<T> value) {
  return push(std::move(value));
}

template <typename T>
Tensor3<T>& Tape<T>::grad_slot(Node n) {
  Tensor3<T>& g = grads_[n];
  if (!g.same_shape(values_[n])) {
    const auto& v = values_[n];
    g = Tensor3<T>(v.batch(), v.channels(), v.length());
  }
  return g;
}

template <typename T>
const Tensor3<T>& Tape<T>::scaled_grad(Node n, OpKind kind,
                                       Tensor3<T>& scratch) {
  const T f = factor_for(kind);
  if (f == T(1)) return grad_slot(n);
  scratch = grad_slot(n);
  for (T& v : scratch.data()) v *= f;
  return scratch;
}

template <typename T>
const Tensor3<T>& Tape<T>::grad(Node n) {
  return grad_slot(n);
}

template <typename T>
void Tape<T>::record(OpKind kind, std::vector<Node> inputs, Node out,
                     std::function<void(Tape&)> fn) {
  records_.push_back(AdjointRecord{kind, std::move(inputs), out, std::move(fn)});
}

template <typename T>
typename Tape<T>::Node Tape<T>::conv1d(Node x, const FilterSetParams<T>& params,
                                       FilterSetParams<T>* grad) {
  Node out = push(mrcae::conv1d(values_[x], params));
  record(OpKind::kConv1d, {x}, out, [x, out, &params, grad](Tape& tape) {
    Tensor3<T> scaled;
    const Tensor3<T>& gout =
        tape.scaled_grad(out, OpKind::kConv1d, scaled);
    conv1d_backward(tape.values_[x], params, gout, &tape.grad_slot(x), grad);
  });
  return out;
}

template <typename T>
typename Tape<T>::Node Tape<T>::conv_transpose1d(
    Node x, const FilterSetParams<T>& params, FilterSetParams<T>* grad) {
  Node out = push(mrcae::conv_transpose1d(values_[x], params));
  record(OpKind::kConvTranspose1d, {x}, out,
         [x, out, &params, grad](Tape& tape) {
           Tensor3<T> scaled;
           const Tensor3<T>& gout =
               tape.scaled_grad(out, OpKind::kConvTranspose1d, scaled);
           conv_transpose1d_backward(tape.values_[x], params, gout,
                                     &tape.grad_slot(x), grad);
         });
  return out;
}

template <typename T>
typename Tape<T>::Node Tape<T>::batchnorm(Node x, BatchNormParams<T>& params,
                                          BatchNormGrads<T>* grad) {
  check_batchnorm(values_[x], params);
  BatchNormCache cache;
  Tensor3<T> xhat;
  Node out = push(batchnorm_train<T>(values_[x], params, &cache, &xhat));
  record(OpKind::kBatchNorm, {x}, out,
         [x, out, &params, grad, cache = std::move(cache),
          xhat = std::move(xhat)](Tape& tape) {
           const T f = tape.factor_for(OpKind::kBatchNorm);
           const Tensor3<T>& g = tape.grad_slot(out);
           Tensor3<T>& gx = tape.grad_slot(x);
           const double count = double(g.batch() * g.length());
           for (std::size_t c = 0; c < g.channels(); ++c) {
             double sum_g = 0;
             double sum_gx = 0;
             for (std::size_t b = 0; b < g.batch(); ++b) {
               auto gr = g.row(b, c);
               auto xr = xhat.row(b, c);
               for (std::size_t t = 0; t < gr.size(); ++t) {
                 sum_g += gr[t];
                 sum_gx += double(gr[t]) * xr[t];
               }
             }
             if (grad) {
               grad->gamma[c] += static_cast<T>(f * sum_gx);
               grad->beta[c] += static_cast<T>(f * sum_g);
             }
             const double k = f * params.gamma[c] * cache.inv_std[c] / count;
             for (std::size_t b = 0; b < g.batch(); ++b) {
               auto gr = g.row(b, c);
               auto xr = xhat.row(b, c);
               auto out_row = gx.row(b, c);
               for (std::size_t t = 0; t < gr.size(); ++t) {
                 out_row[t] += static_cast<T>(
                     k * (count * gr[t] - sum_g - double(xr[t]) * sum_gx));
               }
             }
           }
         });
  return out;
}

template <typename T>
typename Tape<T>::Node Tape<T>::elu(Node x) {
  Node out = push(mrcae::elu(values_[x]));
  record(OpKind::kElu, {x}, out, [x, out](Tape& tape) {
    const T f = tape.factor_for(OpKind::kElu);
    auto g = tape.grad_slot(out).data();
    auto in = tape.values_[x].data();
    auto y = tape.values_[out].data();
    auto gx = tape.grad_slot(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      // d/dx expm1(x) = exp(x) = y + 1 on the non-positive branch.
      const T d = in[i] > T(0) ? T(1) : y[i] + T(1);
      gx[i] += f * g[i] * d;
    }
  });
  return out;
}

template <typename T>
typename Tape<T>::Node Tape<T>::concat_channels(std::span<const Node> parts) {
  std::vector<Tensor3<T>> copies;
  copies.reserve(parts.size());
  for (Node p : parts) copies.push_back(values_[p]);
  Node out = push(mrcae::concat_channels<T>(copies));
  std::vector<Node> inputs(parts.begin(), parts.end());
  record(OpKind::kConcat, inputs, out, [inputs, out](Tape& tape) {
    const T f = tape.factor_for(OpKind::kConcat);
    const Tensor3<T>& g = tape.grad_slot(out);
    std::size_t c0 = 0;
    for (Node p : inputs) {
      Tensor3<T>& gp = tape.grad_slot(p);
      for (std::size_t b = 0; b < g.batch(); ++b) {
        for (std::size_t c = 0; c < gp.channels(); ++c) {
          auto src = g.row(b, c0 + c);
          auto dst = gp.row(b, c);
          for (std::size_t t = 0; t < src.size(); ++t) dst[t] += f * src[t];
        }
      }
      c0 += gp.channels();
    }
  });
  return out;
}

template <typename T>
double Tape<T>::l1_loss(Node pred, const Tensor3<T>& target, double scale) {
  const double loss = scale * mrcae::l1_loss(values_[pred], target);
  Node out = push(Tensor3<T>(1, 1, 1, static_cast<T>(loss)));
  loss_node_ = out;
  record(OpKind::kL1Loss, {pred}, out,
         [pred, out, scale, target](Tape& tape) {
           const double seed =
               tape.factor_for(OpKind::kL1Loss) * tape.grad_slot(out)(0, 0, 0) * scale;
           auto p = tape.values_[pred].data();
           auto t = target.data();
           auto gp = tape.grad_slot(pred).data();
           for (std::size_t i = 0; i < p.size(); ++i) {
             const T diff = p[i] - t[i];
             const T sign = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
             gp[i] += static_cast<T>(seed) * sign;
           }
         });
  return loss;
}

template <typename T>
void Tape<T>::backward() {
  if (loss_node_ == static_cast<Node>(-1)) {
    throw ConfigError("Tape::backward: no loss recorded");
  }
  backward(loss_node_, Tensor3<T>(1, 1, 1, T(1)));
}

template <typename T>
void Tape<T>::backward(Node output, const Tensor3<T>& seed) {
  if (!seed.same_shape(values_[output])) {
    throw ConfigError("Tape::backward: seed shape mismatch");
  }
  Tensor3<T>& g = grad_slot(output);
  auto gd = g.data();
  auto sd = seed.data();
  for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += sd[i];
  while (!records_.empty()) {
    AdjointRecord rec = std::move(records_.back());
    records_.pop_back();
    rec.backward(*this);
  }
  loss_node_ = static_cast<Node>(-1);
}

#define MRCAE_INSTANTIATE_OPS(T)                                              \
  template Tensor3<T> conv1d<T>(const Tensor3<T>&, const FilterSetParams<T>&); \
  template Tensor3<T> conv_transpose1d<T>(const Tensor3<T>&,                  \
                                          const FilterSetParams<T>&);         \
  template Tensor3<T> batchnorm<T>(const Tensor3<T>&, BatchNormParams<T>&,    \
                                   Mode);                                     \
  template Tensor3<T> batchnorm_infer<T>(const Tensor3<T>&,                   \
                                         const BatchNormParams<T>&);          \
  template Tensor3<T> elu<T>(const Tensor3<T>&);                              \
  template double l1_loss<T>(const Tensor3<T>&, const Tensor3<T>&);           \
  template Tensor3<T> concat_channels<T>(std::span<const Tensor3<T>>);        \
  template void conv1d_backward<T>(const Tensor3<T>&,                         \
                                   const FilterSetParams<T>&,                 \
                                   const Tensor3<T>&, Tensor3<T>*,            \
                                   FilterSetParams<T>*);                      \
  template void conv_transpose1d_backward<T>(                                 \
      const Tensor3<T>&, const FilterSetParams<T>&, const Tensor3<T>&,        \
      Tensor3<T>*, FilterSetParams<T>*);                                      \
  template class Tape<T>;

MRCAE_INSTANTIATE_OPS(float)
MRCAE_INSTANTIATE_OPS(double)

#undef MRCAE_INSTANTIATE_OPS

}  // namespace mrcae
