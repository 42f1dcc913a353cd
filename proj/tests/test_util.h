// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_TESTS_TEST_UTIL_H_
#define MRCAE_TESTS_TEST_UTIL_H_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "mrcae/model.h"
#include "mrcae/tensor.h"

namespace mrcae::testing {

template <typename T>
Tensor3<T> random_tensor(std::size_t b, std::size_t c, std::size_t n,
                         std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor3<T> x(b, c, n);
  for (auto& v : x.data()) v = static_cast<T>(u(rng));
  return x;
}

template <typename T>
FilterSetParams<T> random_filters(std::size_t k, std::size_t c, std::size_t a,
                                  std::size_t bias_len, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FilterSetParams<T> p(k, c, a, bias_len);
  for (auto& w : p.weights) w = static_cast<T>(u(rng));
  for (auto& b : p.bias) b = static_cast<T>(u(rng));
  return p;
}

// Direct triple sums, written from the definitions and nothing else.
inline Tensor3<double> conv1d_reference(const Tensor3<double>& x,
                                        const FilterSetParams<double>& p) {
  const long left = static_cast<long>((p.filter_len - 1) / 2);
  const long n = static_cast<long>(x.length());
  Tensor3<double> out(x.batch(), p.num_filters, x.length());
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t k = 0; k < p.num_filters; ++k) {
      for (long t = 0; t < n; ++t) {
        double s = p.bias[k];
        for (std::size_t c = 0; c < p.in_channels; ++c) {
          for (std::size_t tau = 0; tau < p.filter_len; ++tau) {
            const long i = t + static_cast<long>(tau) - left;
            if (i >= 0 && i < n) s += p.w(k, c, tau) * x(b, c, i);
          }
        }
        out(b, k, t) = s;
      }
    }
  }
  return out;
}

inline Tensor3<double> conv_transpose1d_reference(const Tensor3<double>& u,
                                                  const FilterSetParams<double>& p) {
  const long left = static_cast<long>((p.filter_len - 1) / 2);
  const long n = static_cast<long>(u.length());
  Tensor3<double> out(u.batch(), p.in_channels, u.length());
  for (std::size_t b = 0; b < u.batch(); ++b) {
    for (std::size_t c = 0; c < p.in_channels; ++c) {
      for (long s = 0; s < n; ++s) {
        double acc = p.bias[c];
        for (std::size_t k = 0; k < p.num_filters; ++k) {
          for (std::size_t tau = 0; tau < p.filter_len; ++tau) {
            const long t = s - static_cast<long>(tau) + left;
            if (t >= 0 && t < n) acc += p.w(k, c, tau) * u(b, k, t);
          }
        }
        out(b, c, s) = acc;
      }
    }
  }
  return out;
}

template <typename T>
double max_abs_diff(const Tensor3<T>& a, const Tensor3<T>& b) {
  double m = 0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    m = std::max(m, std::abs(double(x[i]) - double(y[i])));
  }
  return m;
}

template <typename T>
double dot(const Tensor3<T>& a, const Tensor3<T>& b) {
  double s = 0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) s += double(x[i]) * double(y[i]);
  return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("mrcae_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.segment_len = 32;
  c.in_channels = 2;
  c.num_sources = 1;
  c.encoder = {{LayerKind::kEncoderConv, {{2, 3}, {2, 5}}}};
  c.decoder = {{LayerKind::kDecoderTranspose, {{2, 3}, {2, 5}}}};
  c.output_filter_len = 5;
  c.seed = 3;
  return c;
}

}  // namespace mrcae::testing

#endif  // MRCAE_TESTS_TEST_UTIL_H_
