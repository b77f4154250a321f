#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "diffstg/metrics.hpp"
#include "diffstg/ugnet.hpp"

namespace diffstg {

struct TrainConfig {
  std::size_t batch_size = 8;
  double lr = 0.002;
  std::size_t lr_halving_every = 5;  // epochs
  std::size_t patience = 10;         // epochs without validation improvement
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
  int steps = 100;  // N
  double beta_1 = 1e-4;
  double beta_N = 0.1;
  ScheduleKind schedule = ScheduleKind::quadratic;
  std::size_t val_samples = 4;   // S used for validation CRPS
  std::size_t val_windows = 32;  // evenly spaced validation windows, 0 = all
  SamplerConfig val_sampler;
  double grad_clip = 1.0;            // global norm, 0 disables
  std::size_t steps_per_epoch = 0;   // 0 = one pass over the training windows
  double time_budget_seconds = 0.0;  // 0 = unlimited; checked after each epoch
  LossOptions loss;

  void validate() const;
  NoiseSchedule make_noise_schedule() const { return make_schedule(schedule, steps, beta_1, beta_N); }
};

/// lr0 * 0.5^floor((epoch - 1) / halving_every), epochs counted from 1.
double learning_rate(const TrainConfig& config, std::size_t epoch);

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;
};

namespace detail {

template <typename T>
void adam_tensor(std::span<T> w, std::span<const T> g, std::vector<double>& m, std::vector<double>& v,
                 const AdamState& state, double lr, double c1, double c2) {
  const double b1 = state.beta1, b2 = state.beta2;
  // lr m_hat / (sqrt(v_hat) + eps) with the bias corrections folded into two scalars
  const double step = lr * std::sqrt(c2) / c1, eps = state.eps * std::sqrt(c2);
  T* __restrict wp = w.data();
  double* __restrict mp = m.data();
  double* __restrict vp = v.data();
  const std::size_t n = w.size();
  if (g.empty()) {
    for (std::size_t j = 0; j < n; ++j) {
      mp[j] *= b1;
      vp[j] *= b2;
      wp[j] = static_cast<T>(static_cast<double>(wp[j]) - step * mp[j] / (std::sqrt(vp[j]) + eps));
    }
    return;
  }
  const T* __restrict gp = g.data();
  for (std::size_t j = 0; j < n; ++j) {
    const double gj = static_cast<double>(gp[j]);
    mp[j] = b1 * mp[j] + (1.0 - b1) * gj;
    vp[j] = b2 * vp[j] + (1.0 - b2) * gj * gj;
    wp[j] = static_cast<T>(static_cast<double>(wp[j]) - step * mp[j] / (std::sqrt(vp[j]) + eps));
  }
}

template <typename T>
void adam_apply(std::span<Tensor<T>> params, std::span<const std::span<const T>> grads, AdamState& state, double lr) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state holds " + std::to_string(state.m.size()) +
                                " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool grad_ok = grads[i].empty() || grads[i].size() == params[i].size();
    if (!grad_ok || state.m[i].size() != params[i].size()) {
      throw_shape_error("adam_step", "param vs (grad, state) sizes", params[i].shape(),
                        Shape{grads[i].size(), state.m[i].size()});
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_tensor<T>(params[i].mutable_data(), grads[i], state.m[i], state.v[i], state, lr, c1, c2);
  }
}

}  // namespace detail

/// One bias-corrected Adam update; grads[i] pairs with params[i].
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::vector<T>> grads, AdamState& state, double lr) {
  std::vector<std::span<const T>> views;
  for (const auto& g : grads) {
    if (g.empty()) throw std::invalid_argument("adam_step: empty gradient");
    views.emplace_back(g);
  }
  detail::adam_apply<T>(params, views, state, lr);
}

/// Adam on the gradients accumulated in the tensors (missing grads count as 0).
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState& state, double lr) {
  std::vector<std::span<const T>> views;
  for (const auto& p : params) views.push_back(p.has_grad() ? p.grad() : std::span<const T>());
  detail::adam_apply<T>(params, views, state, lr);
}

/// Rescales gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::span<Tensor<T>> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.mutable_grad()) g = static_cast<T>(g * f);
    }
  }
  return norm;
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_crps = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
  std::size_t clipped_steps = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_crps = 0.0;
  bool early_stopped = false;
  bool budget_exhausted = false;
};

void write_train_log(const std::filesystem::path& path, std::span<const EpochLog> log);

/// Evenly spaced subset of `count` windows (all when count is 0 or too large).
std::vector<const STGWindow*> spread_windows(std::span<const STGWindow> windows, std::size_t count);

/// Mean standardized CRPS of S-sample ensembles on the given windows.
template <typename T>
double validation_crps(const Denoiser<T>& model, std::span<const STGWindow* const> windows,
                       const NoiseSchedule& schedule, std::size_t samples, const SamplerConfig& sampler,
                       std::uint64_t seed) {
  if (windows.empty()) throw std::invalid_argument("validation needs at least one window");
  EnsembleOptions opt;
  opt.samples = samples;
  opt.sampler = sampler;
  opt.seed = seed;
  auto ensembles = ensemble_sample_many<T>(model, windows, schedule, opt);
  EnsembleEvaluator eval(windows[0]->horizon);
  for (std::size_t i = 0; i < windows.size(); ++i) eval.add(ensembles[i], *windows[i]);
  return eval.report().standardized.crps;
}

/// Training loop with Adam, step-decayed learning rate, gradient
/// clipping and early stopping on validation CRPS. On return `model` holds the
/// best-on-validation parameters. When out_dir is non-empty the best checkpoint
/// goes to out_dir/checkpoint and the log to out_dir/train_log.csv.
template <typename T>
TrainResult train(UGnet<T>& model, std::span<const STGWindow> train_windows, std::span<const STGWindow> val_windows,
                  const TrainConfig& config, const std::filesystem::path& out_dir = {},
                  const std::map<std::string, std::string>& metadata = {}) {
  config.validate();
  if (train_windows.empty()) throw std::invalid_argument("train: no training windows");
  if (val_windows.empty()) throw std::invalid_argument("train: no validation windows");
  const NoiseSchedule schedule = config.make_noise_schedule();
  const auto val_subset = spread_windows(val_windows, config.val_windows);
  const std::uint64_t val_seed = config.seed ^ 0x9e3779b97f4a7c15ULL;

  std::vector<Tensor<T>> params;
  for (auto& p : model.parameters()) params.push_back(p.second.set_requires_grad(true));
  std::vector<std::vector<T>> best(params.size());
  auto snapshot = [&] {
    for (std::size_t i = 0; i < params.size(); ++i) best[i].assign(params[i].data().begin(), params[i].data().end());
  };

  AdamState adam;
  TrainResult result;
  std::size_t since_best = 0;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t full_steps = (train_windows.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t steps_per_epoch = config.steps_per_epoch ? config.steps_per_epoch : full_steps;
  std::size_t cursor = order.size();
  Rng shuffle_rng = derive_rng(config.seed, 0, 1);

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = learning_rate(config, epoch);
    Rng noise_rng = derive_rng(config.seed, epoch, 2);
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<const STGWindow*> batch;
      while (batch.size() < config.batch_size) {
        if (cursor >= order.size()) {
          std::shuffle(order.begin(), order.end(), shuffle_rng);
          cursor = 0;
        }
        batch.push_back(&train_windows[order[cursor++]]);
        if (batch.size() == order.size()) break;
      }
      Tape<T> tape;
      double loss_value;
      {
        TapeScope<T> scope(tape);
        model.zero_grad();
        Tensor<T> loss = denoising_loss<T>(model, std::span<const STGWindow* const>(batch), schedule, noise_rng,
                                           config.loss);
        loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) {
          throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(step + 1));
        }
        tape.backward(loss);
      }
      tape.clear();
      if (clip_grad_norm<T>(params, config.grad_clip) > config.grad_clip && config.grad_clip > 0.0) {
        ++entry.clipped_steps;
      }
      adam_step<T>(params, adam, lr);
      loss_sum += loss_value;
    }
    entry.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    entry.val_crps = validation_crps<T>(model, val_subset, schedule, config.val_samples, config.val_sampler, val_seed);
    entry.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);

    if (result.best_epoch == 0 || entry.val_crps < result.best_val_crps) {
      result.best_epoch = epoch;
      result.best_val_crps = entry.val_crps;
      since_best = 0;
      snapshot();
      if (!out_dir.empty()) {
        auto meta = metadata;
        meta["train.best_epoch"] = std::to_string(epoch);
        save_checkpoint(out_dir / "checkpoint", model, meta);
      }
    } else {
      ++since_best;
    }
    if (!out_dir.empty()) write_train_log(out_dir / "train_log.csv", result.log);
    if (since_best >= config.patience) {
      result.early_stopped = true;
      break;
    }
    if (config.time_budget_seconds > 0.0 && entry.wall_seconds >= config.time_budget_seconds) {
      result.budget_exhausted = epoch < config.max_epochs;
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(best[i].begin(), best[i].end(), params[i].mutable_data().begin());
    params[i].zero_grad();
    params[i].set_requires_grad(false);
  }
  return result;
}

}  // namespace diffstg
