// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mrcae/bss_eval.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "mrcae/errors.h"

namespace mrcae {

namespace {

// sum_m a[m] * b[m + lag] over the overlap, lag >= 0.
double lagged_dot(const std::vector<double>& a, const std::vector<double>& b,
                  std::size_t lag) {
  const std::size_t n = a.size();
  if (lag >= n) return 0.0;
  double s = 0;
  for (std::size_t m = 0; m + lag < n; ++m) s += a[m] * b[m + lag];
  return s;
}

std::vector<double> padded(const std::vector<double>& x, std::size_t taps) {
  std::vector<double> out(x.size() + taps - 1, 0.0);
  std::copy(x.begin(), x.end(), out.begin());
  return out;
}

// Orthonormal basis (Gram-Schmidt at lag zero, two passes) of the signals'
// span. Delays commute with linear combinations, hence the delay span is
// the same; near-collinear channels, such as one source panned into two
// channels and quantized separately, become well-conditioned unit signals.
// Signals already in the span of earlier ones are dropped.
std::vector<std::vector<double>> orthonormalize(std::vector<std::vector<double>> signals) {
  std::vector<std::vector<double>> ortho;
  for (const auto& s : signals) {
    std::vector<double> r = s;
    double own = 0;
    for (double v : s) own += v * v;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : ortho) {
        double c = 0;
        for (std::size_t n = 0; n < r.size(); ++n) c += q[n] * r[n];
        for (std::size_t n = 0; n < r.size(); ++n) r[n] -= c * q[n];
      }
    }
    double left = 0;
    for (double v : r) left += v * v;
    if (!(left > 1e-24 * own) || !(own > 0)) continue;
    const double inv = 1.0 / std::sqrt(left);
    for (auto& v : r) v *= inv;
    ortho.push_back(std::move(r));
  }
  if (ortho.empty()) ortho.push_back(std::move(signals[0]));
  return ortho;
}

}  // namespace

DelayBasis::DelayBasis(std::span<const std::vector<double>> targets,
                       std::size_t taps)
    : targets_(targets.begin(), targets.end()), taps_(taps) {
  if (taps == 0) throw ConfigError("bss_eval: filter length must be >= 1");
  if (targets_.empty()) throw ConfigError("bss_eval: no target signals");
  length_ = targets_[0].size();
  for (const auto& t : targets_) {
    if (t.size() != length_) throw ConfigError("bss_eval: target lengths differ");
  }
  targets_ = orthonormalize(std::move(targets_));
  const std::size_t m = targets_.size();
  const std::size_t dim = m * taps;
  Eigen::MatrixXd gram(dim, dim);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      // G[(i,a),(j,b)] = sum_n t_i(n - a) t_j(n - b) = r_ij(a - b)
      std::vector<double> pos(taps), neg(taps);
      for (std::size_t d = 0; d < taps; ++d) {
        pos[d] = lagged_dot(targets_[i], targets_[j], d);  // r_ij(d)
        neg[d] = lagged_dot(targets_[j], targets_[i], d);  // r_ij(-d)
      }
      for (std::size_t a = 0; a < taps; ++a) {
        for (std::size_t b = 0; b < taps; ++b) {
          const double v = a >= b ? pos[a - b] : neg[b - a];
          gram(i * taps + a, j * taps + b) = v;
          gram(j * taps + b, i * taps + a) = v;
        }
      }
    }
  }
  const double trace = gram.trace();
  if (!(trace > 0)) {
    zero_ = true;
    return;
  }
  llt_.compute(gram);
  bool ok = llt_.info() == Eigen::Success;
  if (ok) {
    const Eigen::VectorXd pivots = llt_.matrixLLT().diagonal().array().square();
    ok = pivots.minCoeff() > 1e-10 * pivots.maxCoeff();
  }
  if (!ok) {
    // Rank-deficient span (for instance a source panned identically into
    // two channels): solve through the pseudo-inverse instead.
    rank_deficient_ = true;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) {
      throw NumericError("bss_eval: Gram matrix eigendecomposition failed");
    }
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const double floor = 1e-10 * lambda.maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < lambda.size(); ++k) {
      if (lambda(k) > floor) keep.push_back(k);
    }
    basis_.resize(gram.rows(), static_cast<Eigen::Index>(keep.size()));
    inv_lambda_.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      basis_.col(static_cast<Eigen::Index>(k)) = eig.eigenvectors().col(keep[k]);
      inv_lambda_(static_cast<Eigen::Index>(k)) = 1.0 / lambda(keep[k]);
    }
  }
}

Eigen::VectorXd DelayBasis::solve(const Eigen::VectorXd& rhs) const {
  if (rank_deficient_) return basis_ * inv_lambda_.asDiagonal() * (basis_.transpose() * rhs);
  return llt_.solve(rhs);
}

std::vector<double> DelayBasis::project(std::span<const double> estimate) const {
  if (estimate.size() != length_) {
    throw ConfigError("bss_eval: estimate length differs from the targets");
  }
  const std::size_t padded_len = padded_length();
  std::vector<double> out(padded_len, 0.0);
  if (zero_) return out;
  const std::size_t m = targets_.size();

  // Iterative refinement: each pass projects what is left of the residual
  // in signal space and adds the correction.
  std::vector<double> residual(padded_len, 0.0);
  std::copy(estimate.begin(), estimate.end(), residual.begin());
  Eigen::VectorXd rhs(m * taps_);
  double previous = std::numeric_limits<double>::infinity();
  for (int pass = 0; pass < 4; ++pass) {
    for (std::size_t i = 0; i < m; ++i) {
      const auto& t = targets_[i];
      for (std::size_t d = 0; d < taps_; ++d) {
        const double* r = residual.data() + d;
        double s = 0;
        for (std::size_t n = 0; n < length_; ++n) s += t[n] * r[n];
        rhs(i * taps_ + d) = s;
      }
    }
    const Eigen::VectorXd coef = solve(rhs);
    std::vector<double> step(padded_len, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const auto& t = targets_[i];
      for (std::size_t d = 0; d < taps_; ++d) {
        const double c = coef(i * taps_ + d);
        double* dst = step.data() + d;
        for (std::size_t n = 0; n < length_; ++n) dst[n] += c * t[n];
      }
    }
    double step_energy = 0, total = 0;
    for (std::size_t n = 0; n < padded_len; ++n) {
      out[n] += step[n];
      residual[n] -= step[n];
      step_energy += step[n] * step[n];
      total += out[n] * out[n];
    }
    if (step_energy <= 1e-28 * total || step_energy >= previous) break;
    previous = step_energy;
  }
  return out;
}

std::vector<double> project_filtered(std::span<const std::vector<double>> targets,
                                     std::span<const double> estimate,
                                     std::size_t taps) {
  return DelayBasis(targets, taps).project(estimate);
}

namespace {

void check_shapes(const AudioClip& estimate, std::span<const AudioClip> refs) {
  if (refs.empty()) throw ConfigError("bss_eval: no reference sources");
  for (const auto& r : refs) {
    if (r.channels() != estimate.channels() || r.length() != estimate.length()) {
      throw ConfigError("bss_eval: estimate and references differ in shape");
    }
  }
}

std::vector<std::vector<double>> all_channels(std::span<const AudioClip> refs) {
  std::vector<std::vector<double>> out;
  for (const auto& r : refs) {
    for (const auto& ch : r.samples) out.push_back(ch);
  }
  return out;
}

Decomposition decompose_with(const AudioClip& estimate, const AudioClip& reference,
                             const DelayBasis& own,
                             const DelayBasis* all, std::size_t taps) {
  Decomposition d;
  for (std::size_t c = 0; c < estimate.channels(); ++c) {
    const auto& est = estimate.samples[c];
    std::vector<double> s_true = padded(reference.samples[c], taps);
    std::vector<double> p_own = own.project(est);
    std::vector<double> p_all = all ? all->project(est) : p_own;
    std::vector<double> est_pad = padded(est, taps);
    const std::size_t n = s_true.size();
    std::vector<double> e_spat(n), e_interf(n), e_artif(n);
    for (std::size_t t = 0; t < n; ++t) {
      e_spat[t] = p_own[t] - s_true[t];
      e_interf[t] = p_all[t] - p_own[t];
      e_artif[t] = est_pad[t] - p_all[t];
    }
    d.s_true.push_back(std::move(s_true));
    d.e_spat.push_back(std::move(e_spat));
    d.e_interf.push_back(std::move(e_interf));
    d.e_artif.push_back(std::move(e_artif));
  }
  return d;
}

}  // namespace

Decomposition decompose_image(const AudioClip& estimate,
                              std::span<const AudioClip> references,
                              std::size_t source_index, std::size_t taps) {
  check_shapes(estimate, references);
  if (source_index >= references.size()) {
    throw ConfigError("bss_eval: source index " + std::to_string(source_index) +
                      " out of range");
  }
  const DelayBasis own(references[source_index].samples, taps);
  std::optional<DelayBasis> all;
  if (references.size() > 1) all.emplace(all_channels(references), taps);
  return decompose_with(estimate, references[source_index], own,
                        all ? &*all : nullptr, taps);
}

namespace {

double ratio_db(double num, double den) {
  if (den <= 1e-20 * num) return kMetricCapDb;
  if (num <= 0) return -kMetricCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kMetricCapDb, kMetricCapDb);
}

double summed_energy(std::initializer_list<const std::vector<std::vector<double>>*> parts) {
  const auto& first = *parts.begin();
  double e = 0;
  for (std::size_t c = 0; c < first->size(); ++c) {
    for (std::size_t t = 0; t < (*first)[c].size(); ++t) {
      double v = 0;
      for (const auto* p : parts) v += (*p)[c][t];
      e += v * v;
    }
  }
  return e;
}

}  // namespace

SourceMetrics metrics_from_decomposition(const Decomposition& d) {
  const double s = summed_energy({&d.s_true});
  if (!(s > 0)) throw UndefinedSourceError("bss_eval: reference source has zero energy");
  SourceMetrics m;
  m.sdr = ratio_db(s, summed_energy({&d.e_spat, &d.e_interf, &d.e_artif}));
  m.isr = ratio_db(s, summed_energy({&d.e_spat}));
  m.sir = ratio_db(summed_energy({&d.s_true, &d.e_spat}), summed_energy({&d.e_interf}));
  m.sar = ratio_db(summed_energy({&d.s_true, &d.e_spat, &d.e_interf}),
                   summed_energy({&d.e_artif}));
  return m;
}

EvalResult evaluate_song(std::span<const AudioClip> estimates,
                         std::span<const AudioClip> references, std::size_t taps) {
  if (estimates.empty()) throw ConfigError("bss_eval: no estimates");
  if (estimates.size() > references.size()) {
    throw ConfigError("bss_eval: more estimates than references");
  }
  for (const auto& e : estimates) check_shapes(e, references);
  std::optional<DelayBasis> all;
  if (references.size() > 1) all.emplace(all_channels(references), taps);
  EvalResult result;
  result.filter_len = taps;
  for (std::size_t j = 0; j < estimates.size(); ++j) {
    const DelayBasis own(references[j].samples, taps);
    result.sources.push_back(metrics_from_decomposition(
        decompose_with(estimates[j], references[j], own, all ? &*all : nullptr, taps)));
  }
  return result;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MedianReport aggregate_median(std::span<const EvalResult> results) {
  if (results.empty()) throw ConfigError("aggregate_median: no results");
  const std::size_t sources = results[0].sources.size();
  for (const auto& r : results) {
    if (r.sources.size() != sources) {
      throw ConfigError("aggregate_median: songs report different source counts");
    }
  }
  MedianReport report;
  report.song_count = results.size();
  for (std::size_t j = 0; j < sources; ++j) {
    std::vector<double> sdr, isr, sir, sar;
    for (const auto& r : results) {
      sdr.push_back(r.sources[j].sdr);
      isr.push_back(r.sources[j].isr);
      sir.push_back(r.sources[j].sir);
      sar.push_back(r.sources[j].sar);
    }
    report.sources.push_back({median(sdr), median(isr), median(sir), median(sar)});
  }
  return report;
}

}  // namespace mrcae
