// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mrcae/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "json.hpp"
#include "mrcae/checkpoint.h"
#include "mrcae/errors.h"

namespace mrcae {

void Hyperparams::validate() const {
  if (!(lr > 0)) throw ConfigError("hyper.lr must be positive");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) {
    throw ConfigError("hyper.beta1 and hyper.beta2 must lie in (0, 1)");
  }
  if (!(eps > 0)) throw ConfigError("hyper.eps must be positive");
  if (batch_size == 0) throw ConfigError("hyper.batch_size must be >= 1");
  if (plateau_patience == 0) throw ConfigError("hyper.plateau_patience must be >= 1");
  if (!(lr_reduce_factor > 1)) throw ConfigError("hyper.lr_reduce_factor must exceed 1");
  if (!(min_lr > 0)) throw ConfigError("hyper.min_lr must be positive");
}

template <typename T>
void adam_step(std::span<const TensorView<T>> params,
               std::span<const TensorView<T>> grads, AdamState<T>& state,
               const Hyperparams& hp) {
  if (params.size() != grads.size()) throw ConfigError("adam_step: tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].values.size() != grads[i].values.size()) {
      throw ConfigError("adam_step: shape mismatch for " + params[i].name);
    }
    require_finite(std::span<const T>(grads[i].values), grads[i].name.c_str());
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.values.size(), T(0));
      state.v.emplace_back(p.values.size(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw ConfigError("adam_step: state mismatch");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values;
    auto g = grads[i].values;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      const double mk = hp.beta1 * m[k] + (1.0 - hp.beta1) * gk;
      const double vk = hp.beta2 * v[k] + (1.0 - hp.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double m_hat = mk / bc1;
      const double v_hat = vk / bc2;
      p[k] = static_cast<T>(p[k] - hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps));
    }
  }
}

void TrainHistory::append(const EpochRecord& record) {
  epochs.push_back(record);
  if (record.val_loss < best_val) {
    best_val = record.val_loss;
    best_epoch = record.epoch;
  }
}

bool TrainHistory::same_trajectory(const TrainHistory& other) const {
  if (epochs.size() != other.epochs.size() || best_epoch != other.best_epoch) {
    return false;
  }
  if (!(best_val == other.best_val) &&
      !(std::isinf(best_val) && std::isinf(other.best_val))) {
    return false;
  }
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = other.epochs[i];
    if (a.epoch != b.epoch || a.train_loss != b.train_loss ||
        a.val_loss != b.val_loss || a.lr != b.lr) {
      return false;
    }
  }
  return true;
}

double reduce_on_plateau(const TrainHistory& history, const Hyperparams& hp) {
  double lr = hp.lr;
  double best = std::numeric_limits<double>::infinity();
  std::size_t wait = 0;
  for (const auto& e : history.epochs) {
    if (e.val_loss < best) {
      best = e.val_loss;
      wait = 0;
    } else if (++wait >= hp.plateau_patience) {
      lr = std::max(lr / hp.lr_reduce_factor, hp.min_lr);
      wait = 0;
    }
  }
  return lr;
}

template <typename T>
std::pair<Tensor3<T>, Tensor3<T>> gather_batch(
    const TrainingPairs& pairs, std::span<const std::size_t> indices) {
  const auto& in = pairs.inputs;
  const auto& tg = pairs.targets;
  Tensor3<T> x(indices.size(), in.channels(), in.length());
  Tensor3<T> y(indices.size(), tg.channels(), tg.length());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t src = indices[b];
    for (std::size_t c = 0; c < in.channels(); ++c) {
      std::ranges::transform(in.row(src, c), x.row(b, c).begin(),
                             [](double v) { return static_cast<T>(v); });
    }
    for (std::size_t c = 0; c < tg.channels(); ++c) {
      std::ranges::transform(tg.row(src, c), y.row(b, c).begin(),
                             [](double v) { return static_cast<T>(v); });
    }
  }
  return {std::move(x), std::move(y)};
}

template <typename T>
double validate(const Model<T>& model, const TrainingPairs& pairs,
                std::size_t batch_size) {
  if (pairs.size() == 0) throw ConfigError("validate: empty validation set");
  if (batch_size == 0) batch_size = 1;
  double total = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    const std::size_t end = std::min(pairs.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    auto [x, y] = gather_batch<T>(pairs, idx);
    total += l1_loss(model.infer(x), y);
  }
  return total / double(pairs.size());
}

namespace {

void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
}

}  // namespace

template <typename T>
FitResult<T> fit(Model<T> model, const TrainingPairs& train,
                 const TrainingPairs& val, const Hyperparams& hp,
                 const FitOptions& options) {
  hp.validate();
  if (train.size() == 0) throw ConfigError("fit: empty training set");
  if (val.size() == 0) throw ConfigError("fit: empty validation set");

  FitResult<T> result{model, model, {}};
  if (hp.max_epochs == 0) return result;

  std::ofstream log;
  if (options.checkpoint_dir) {
    std::filesystem::create_directories(*options.checkpoint_dir);
    log.open(*options.checkpoint_dir / "train_log.jsonl", std::ios::trunc);
    if (!log) throw FormatError("cannot write training log in " + options.checkpoint_dir->string());
  }

  std::mt19937_64 rng(hp.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  AdamState<T> adam;
  ModelGrads<T> grads(model);
  Hyperparams step_hp = hp;

  for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    step_hp.lr = reduce_on_plateau(result.history, hp);
    shuffle(order, rng);
    double epoch_loss = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += hp.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + hp.batch_size);
      std::span<const std::size_t> idx(order.data() + b0, b1 - b0);
      auto [x, y] = gather_batch<T>(train, idx);
      grads.zero();
      Tape<T> tape;
      auto out = model.forward(tape, tape.input(std::move(x)), &grads);
      const double batch_loss = tape.l1_loss(out, y, 1.0 / double(idx.size()));
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss in epoch " + std::to_string(epoch));
      }
      tape.backward();
      epoch_loss += batch_loss * double(idx.size());
      auto params = model.trainable();
      auto gviews = grads.views();
      adam_step<T>(params, gviews, adam, step_hp);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / double(train.size());
    rec.val_loss = validate(model, val, hp.batch_size);
    rec.lr = step_hp.lr;
    if (!std::isfinite(rec.val_loss)) {
      throw NumericError("non-finite validation loss in epoch " + std::to_string(epoch));
    }
    const bool improved = rec.val_loss < result.history.best_val;
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.append(rec);
    if (improved) result.best = model;

    if (options.checkpoint_dir) {
      if (improved) save_checkpoint(model, *options.checkpoint_dir / "best.ckpt");
      save_checkpoint(model, *options.checkpoint_dir / "last.ckpt");
      log << nlohmann::json{{"epoch", rec.epoch},
                            {"train_loss", rec.train_loss},
                            {"val_loss", rec.val_loss},
                            {"lr", rec.lr},
                            {"seconds", rec.wall_time}}
                 .dump()
          << "\n";
      log.flush();
    }
    if (options.on_epoch) options.on_epoch(rec);
  }
  result.last = std::move(model);
  return result;
}

#define MRCAE_INSTANTIATE_TRAINER(T)                                          \
  template void adam_step<T>(std::span<const TensorView<T>>,                  \
                             std::span<const TensorView<T>>, AdamState<T>&,   \
                             const Hyperparams&);                             \
  template std::pair<Tensor3<T>, Tensor3<T>> gather_batch<T>(                 \
      const TrainingPairs&, std::span<const std::size_t>);                    \
  template double validate<T>(const Model<T>&, const TrainingPairs&,          \
                              std::size_t);                                   \
  template FitResult<T> fit<T>(Model<T>, const TrainingPairs&,                \
                               const TrainingPairs&, const Hyperparams&,      \
                               const FitOptions&);

MRCAE_INSTANTIATE_TRAINER(float)
MRCAE_INSTANTIATE_TRAINER(double)

#undef MRCAE_INSTANTIATE_TRAINER

}  // namespace mrcae
