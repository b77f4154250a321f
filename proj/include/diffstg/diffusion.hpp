#pragma once

// Conditional masked diffusion: forward corruption, the noise-prediction
// loss, ancestral and subset (non-Markovian) reverse samplers, and ensemble
// generation with reuse of the last k reverse states.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "diffstg/ops.hpp"
#include "diffstg/schedule.hpp"
#include "diffstg/window.hpp"

namespace diffstg {

/// Noise predictor eps_theta(x_n, n | condition, graph).
///
/// x_n and condition are [B, F, V, T]; steps holds one diffusion step per
/// batch row. Implementations must not modify their inputs.
template <typename T>
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Tensor<T> predict_noise(const Tensor<T>& x_n, const Tensor<T>& condition,
                                  std::span<const int> steps, const Graph& graph) const = 0;
};

using Rng = std::mt19937_64;

/// Independent stream for (seed, a, b), e.g. (seed, window, trajectory).
inline Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

template <typename T>
void fill_normal(std::span<T> out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (T& v : out) v = static_cast<T>(normal(rng));
}

template <typename T>
Tensor<T> normal_like(const Shape& shape, Rng& rng) {
  Tensor<T> t(shape);
  fill_normal<T>(t.mutable_data(), rng);
  return t;
}

/// x_n = sqrt(alpha_bar_n) x0 + sqrt(1 - alpha_bar_n) eps
template <typename T>
Tensor<T> forward_sample(const Tensor<T>& x0, int n, const NoiseSchedule& schedule, const Tensor<T>& eps) {
  if (x0.shape() != eps.shape()) throw_shape_error("forward_sample", "noise shape differs", x0.shape(), eps.shape());
  if (n < 1 || n > schedule.steps()) {
    throw std::out_of_range("forward_sample: step " + std::to_string(n) + " outside [1, " +
                            std::to_string(schedule.steps()) + "]");
  }
  const double a = schedule.alpha_bar(n);
  return add(scale(x0, static_cast<T>(std::sqrt(a))), scale(eps, static_cast<T>(std::sqrt(1.0 - a))));
}

template <typename T>
struct Posterior {
  Tensor<T> mean;
  double variance = 0.0;
};

/// Mean and variance of q(x_{n-1} | x_n, x_0).
template <typename T>
Posterior<T> posterior_params(const Tensor<T>& x0, const Tensor<T>& xn, int n, const NoiseSchedule& schedule) {
  if (n < 1 || n > schedule.steps()) {
    throw std::out_of_range("posterior_params: step " + std::to_string(n) + " outside [1, " +
                            std::to_string(schedule.steps()) + "]");
  }
  const double a_n = schedule.alpha_bar(n), a_prev = schedule.alpha_bar(n - 1);
  const double beta = schedule.beta(n);
  const double c0 = std::sqrt(a_prev) * beta / (1.0 - a_n);
  const double cn = std::sqrt(schedule.alpha_hat(n)) * (1.0 - a_prev) / (1.0 - a_n);
  return {add(scale(x0, static_cast<T>(c0)), scale(xn, static_cast<T>(cn))), schedule.beta_tilde(n)};
}

/// Reverse-transition variance sigma_theta(n) = (1 - alpha_bar_{n-1}) / (1 - alpha_bar_n) * beta_n.
inline double reverse_variance(const NoiseSchedule& schedule, int n) {
  if (n == 1) return schedule.beta(1);
  return (1.0 - schedule.alpha_bar(n - 1)) / (1.0 - schedule.alpha_bar(n)) * schedule.beta(n);
}

/// Noise scale of the subset update from alpha_bar `a_t` to `a_prev` that
/// reproduces ancestral sampling when eta = 1; eta = 0 is deterministic.
inline double subset_sigma(double a_t, double a_prev, double eta) {
  if (a_prev >= 1.0) return 0.0;
  return eta * std::sqrt((1.0 - a_prev) / (1.0 - a_t)) * std::sqrt(1.0 - a_t / a_prev);
}

/// One ancestral step: mean (x_n - beta_n / sqrt(1 - alpha_bar_n) eps_hat) / sqrt(alpha_hat_n),
/// plus sqrt(beta_tilde_n) z for n > 1.
template <typename T>
void ddpm_update(std::span<const T> x_n, std::span<const T> eps_hat, std::span<const T> z, int n,
                 const NoiseSchedule& schedule, std::span<T> out) {
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha_hat(n));
  const double eps_coef = schedule.beta(n) / std::sqrt(1.0 - schedule.alpha_bar(n));
  const double sigma = n > 1 ? std::sqrt(reverse_variance(schedule, n)) : 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mu = inv_sqrt_alpha * (static_cast<double>(x_n[i]) - eps_coef * static_cast<double>(eps_hat[i]));
    out[i] = static_cast<T>(mu + sigma * static_cast<double>(z[i]));
  }
}

/// One subset step from alpha_bar `a_t` to `a_prev` with noise scale sigma.
template <typename T>
void ddim_update(std::span<const T> x_t, std::span<const T> eps_hat, std::span<const T> z, double a_t,
                 double a_prev, double sigma, std::span<T> out) {
  const double dir = std::sqrt(std::max(0.0, 1.0 - a_prev - sigma * sigma));
  const double sa_t = std::sqrt(a_t), s1a_t = std::sqrt(1.0 - a_t), sa_prev = std::sqrt(a_prev);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double e = static_cast<double>(eps_hat[i]);
    const double x0 = (static_cast<double>(x_t[i]) - s1a_t * e) / sa_t;
    out[i] = static_cast<T>(sa_prev * x0 + dir * e + sigma * static_cast<double>(z[i]));
  }
}

/// Stacks windows into x_all [B, F, V, T] and condition [B, F, V, T].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> stack_windows(std::span<const STGWindow* const> windows) {
  if (windows.empty()) throw std::invalid_argument("stack_windows: empty batch");
  const Shape one = windows[0]->shape();
  const std::size_t n = numel(one);
  std::vector<T> x(windows.size() * n), c(windows.size() * n);
  for (std::size_t b = 0; b < windows.size(); ++b) {
    if (windows[b]->shape() != one) throw_shape_error("stack_windows", "window shapes differ", one, windows[b]->shape());
    auto xb = windows[b]->template x_all_tensor<T>();
    auto cb = windows[b]->template condition<T>();
    std::copy(xb.data().begin(), xb.data().end(), x.begin() + static_cast<std::ptrdiff_t>(b * n));
    std::copy(cb.data().begin(), cb.data().end(), c.begin() + static_cast<std::ptrdiff_t>(b * n));
  }
  Shape batched{windows.size(), one[0], one[1], one[2]};
  return {Tensor<T>(batched, std::move(x)), Tensor<T>(batched, std::move(c))};
}

struct LossOptions {
  bool future_only = false;
};

/// Noise-prediction loss over a batch of windows: draws n ~ U{1..N} per
/// window and eps ~ N(0, I), and returns mean((eps - eps_theta(x_n, n | x_msk, G))^2)
/// over every position of x_all (future positions only if requested).
template <typename T>
Tensor<T> denoising_loss(const Denoiser<T>& denoiser, std::span<const STGWindow* const> windows,
                         const NoiseSchedule& schedule, Rng& rng, LossOptions options = {}) {
  auto [x0, cond] = stack_windows<T>(windows);
  const Graph& graph = *windows[0]->graph;
  std::uniform_int_distribution<int> step(1, schedule.steps());
  std::vector<int> steps(windows.size());
  for (int& n : steps) n = step(rng);
  Tensor<T> eps = normal_like<T>(x0.shape(), rng);

  const std::size_t per = x0.size() / windows.size();
  std::vector<T> noisy(x0.size());
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const double a = schedule.alpha_bar(steps[b]);
    const T ca = static_cast<T>(std::sqrt(a)), ce = static_cast<T>(std::sqrt(1.0 - a));
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) noisy[i] = ca * x0.data()[i] + ce * eps.data()[i];
  }
  Tensor<T> x_n(x0.shape(), std::move(noisy));

  Tensor<T> predicted = denoiser.predict_noise(x_n, cond, steps, graph);
  if (predicted.shape() != eps.shape()) {
    throw_shape_error("denoising_loss", "denoiser output differs from noise", predicted.shape(), eps.shape());
  }
  Tensor<T> err = sub(eps, predicted);
  if (options.future_only) {
    const std::size_t horizon = windows[0]->horizon;
    err = slice(err, 3, err.dim(3) - horizon, horizon);
  }
  return mean(mul(err, err));
}

template <typename T>
Tensor<T> denoising_loss(const Denoiser<T>& denoiser, const STGWindow& window, const NoiseSchedule& schedule,
                         Rng& rng, LossOptions options = {}) {
  const STGWindow* one[] = {&window};
  return denoising_loss<T>(denoiser, std::span<const STGWindow* const>(one), schedule, rng, options);
}

enum class SamplerMode { ddpm, ddim };

SamplerMode parse_sampler_mode(std::string_view name);
std::string_view to_string(SamplerMode mode);

struct SamplerConfig {
  SamplerMode mode = SamplerMode::ddpm;
  int subset_size = 0;  // M; 0 means all N steps
  double eta = 1.0;     // subset sampler noise scale, 1 = ancestral-equivalent
  std::vector<int> tau;  // explicit subset for ddim; overrides subset_size when set
};

/// M steps spread uniformly over 1..N, always ending at N.
std::vector<int> uniform_subset(int steps, int subset_size);
void validate_subset(std::span<const int> tau, int steps);

/// Reverse-chain state kept for sample reuse: the state reached after
/// denoising down to `step` (0 is the final output).
template <typename T>
struct ReverseState {
  int step = 0;
  Tensor<T> value;
};

/// Runs batched reverse chains from fresh Gaussian noise, one rng per batch row.
///
/// With mode ddpm every step 1..N uses the ancestral update; with ddim the
/// subset update walks tau_M > ... > tau_1 > 0. Returns the last `keep_last`
/// states, final state first. The condition tensor is only read.
template <typename T>
std::vector<ReverseState<T>> run_reverse_chain(const Denoiser<T>& denoiser, const Tensor<T>& condition,
                                               const Graph& graph, const NoiseSchedule& schedule,
                                               const SamplerConfig& config, std::span<Rng> rngs,
                                               int keep_last = 1) {
  if (condition.rank() != 4 || condition.dim(0) != rngs.size()) {
    throw std::invalid_argument("run_reverse_chain: condition must be [B,F,V,T] with one rng per row");
  }
  const int total = schedule.steps();
  std::vector<int> tau;
  if (config.mode == SamplerMode::ddpm) {
    for (int n = 1; n <= total; ++n) tau.push_back(n);
  } else if (!config.tau.empty()) {
    tau = config.tau;
  } else {
    tau = uniform_subset(total, config.subset_size > 0 ? config.subset_size : total);
  }
  validate_subset(tau, total);
  if (keep_last < 1 || keep_last > static_cast<int>(tau.size())) {
    throw std::invalid_argument("run_reverse_chain: cannot keep " + std::to_string(keep_last) + " states from " +
                                std::to_string(tau.size()) + " reverse steps");
  }

  const std::size_t batch = condition.dim(0);
  const std::size_t per = condition.size() / batch;
  Tensor<T> x(condition.shape());
  for (std::size_t b = 0; b < batch; ++b) fill_normal<T>(x.mutable_data().subspan(b * per, per), rngs[b]);

  std::vector<ReverseState<T>> kept;
  std::vector<T> z(condition.size());
  for (std::size_t m = tau.size(); m-- > 0;) {
    const int n = tau[m];
    const int prev = m > 0 ? tau[m - 1] : 0;
    std::vector<int> steps(batch, n);
    Tensor<T> eps_hat = denoiser.predict_noise(x, condition, steps, graph);
    if (eps_hat.shape() != x.shape()) throw_shape_error("reverse step", "denoiser output", eps_hat.shape(), x.shape());
    for (std::size_t b = 0; b < batch; ++b) fill_normal<T>(std::span<T>(z).subspan(b * per, per), rngs[b]);

    Tensor<T> next(x.shape());
    if (config.mode == SamplerMode::ddpm) {
      ddpm_update<T>(x.data(), eps_hat.data(), z, n, schedule, next.mutable_data());
    } else {
      const double a_t = schedule.alpha_bar(n), a_prev = schedule.alpha_bar(prev);
      ddim_update<T>(x.data(), eps_hat.data(), z, a_t, a_prev, subset_sigma(a_t, a_prev, config.eta),
                     next.mutable_data());
    }
    for (T v : next.data()) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw std::runtime_error("reverse step " + std::to_string(n) + " -> " + std::to_string(prev) +
                                 " produced non-finite values");
      }
    }
    x = next;
    if (static_cast<int>(m) < keep_last) kept.push_back({prev, x});
  }
  std::reverse(kept.begin(), kept.end());
  return kept;
}

/// Ancestral sampling of x_all for one window; returns [F, V, T].
template <typename T>
Tensor<T> ddpm_sample(const Denoiser<T>& denoiser, const STGWindow& window, const NoiseSchedule& schedule, Rng& rng) {
  Tensor<T> cond = reshape(window.condition<T>(), Shape{1, window.features, window.nodes, window.length()});
  auto states = run_reverse_chain<T>(denoiser, cond, *window.graph, schedule, SamplerConfig{}, std::span<Rng>(&rng, 1));
  return reshape(states.front().value, window.shape());
}

/// Subset sampling over tau_1 < ... < tau_M = N; returns [F, V, T].
template <typename T>
Tensor<T> ddim_sample(const Denoiser<T>& denoiser, const STGWindow& window, const NoiseSchedule& schedule,
                      std::span<const int> tau, double eta, Rng& rng) {
  validate_subset(tau, schedule.steps());
  Tensor<T> cond = reshape(window.condition<T>(), Shape{1, window.features, window.nodes, window.length()});
  SamplerConfig config{SamplerMode::ddim, static_cast<int>(tau.size()), eta, {tau.begin(), tau.end()}};
  auto states = run_reverse_chain<T>(denoiser, cond, *window.graph, schedule, config, std::span<Rng>(&rng, 1));
  return reshape(states.front().value, window.shape());
}

struct SampleProvenance {
  std::size_t trajectory = 0;
  int step = 0;  // reverse-chain step the sample was taken at, 0 = final
};

template <typename T>
struct ForecastEnsemble {
  std::vector<Tensor<T>> samples;  // each [F, V, T_p], standardized units
  std::vector<SampleProvenance> provenance;
  std::size_t trajectories = 0;

  std::size_t size() const { return samples.size(); }
};

struct EnsembleOptions {
  std::size_t samples = 8;  // S
  std::size_t reuse = 1;    // k
  SamplerConfig sampler;
  std::uint64_t seed = 0;
  std::size_t max_batch = 64;  // trajectories per denoiser call
};

inline std::size_t trajectory_count(std::size_t samples, std::size_t reuse) {
  return (samples + reuse - 1) / reuse;
}

/// Ensembles for several windows. Trajectory j of a window draws from
/// derive_rng(seed, window.start, j), so results do not depend on batching.
/// Each trajectory contributes its final state and the k - 1 states before it.
template <typename T>
std::vector<ForecastEnsemble<T>> ensemble_sample_many(const Denoiser<T>& denoiser,
                                                      std::span<const STGWindow* const> windows,
                                                      const NoiseSchedule& schedule, const EnsembleOptions& opt) {
  if (opt.samples < 1 || opt.reuse < 1 || opt.reuse > opt.samples) {
    throw std::invalid_argument("ensemble: need S >= 1 and 1 <= k <= S (S=" + std::to_string(opt.samples) +
                                ", k=" + std::to_string(opt.reuse) + ")");
  }
  const std::size_t per_window = trajectory_count(opt.samples, opt.reuse);
  struct Job {
    std::size_t window, trajectory;
  };
  std::vector<Job> jobs;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    for (std::size_t j = 0; j < per_window; ++j) jobs.push_back({w, j});
  }
  std::vector<ForecastEnsemble<T>> out(windows.size());
  for (auto& e : out) e.trajectories = per_window;
  if (windows.empty()) return out;

  const Shape shape = windows[0]->shape();
  const std::size_t per = numel(shape);
  const std::size_t chunk = std::max<std::size_t>(1, opt.max_batch);
  for (std::size_t begin = 0; begin < jobs.size(); begin += chunk) {
    const std::size_t count = std::min(chunk, jobs.size() - begin);
    std::vector<T> cond(count * per);
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < count; ++i) {
      const auto& job = jobs[begin + i];
      const STGWindow& win = *windows[job.window];
      if (win.shape() != shape) throw_shape_error("ensemble", "window shapes differ", shape, win.shape());
      auto c = win.condition<T>();
      std::copy(c.data().begin(), c.data().end(), cond.begin() + static_cast<std::ptrdiff_t>(i * per));
      rngs.push_back(derive_rng(opt.seed, win.start, job.trajectory));
    }
    Tensor<T> condition(Shape{count, shape[0], shape[1], shape[2]}, std::move(cond));
    auto states = run_reverse_chain<T>(denoiser, condition, *windows[0]->graph, schedule, opt.sampler, rngs,
                                       static_cast<int>(opt.reuse));
    for (std::size_t i = 0; i < count; ++i) {
      const auto& job = jobs[begin + i];
      const STGWindow& win = *windows[job.window];
      auto& ens = out[job.window];
      for (const auto& state : states) {
        if (ens.samples.size() >= opt.samples) break;
        Tensor<T> row = reshape(slice(state.value, 0, i, 1), shape);
        ens.samples.push_back(slice(row, 2, win.history, win.horizon));
        ens.provenance.push_back({job.trajectory, state.step});
      }
    }
  }
  return out;
}

template <typename T>
ForecastEnsemble<T> ensemble_sample(const Denoiser<T>& denoiser, const STGWindow& window,
                                    const NoiseSchedule& schedule, const EnsembleOptions& options) {
  const STGWindow* one[] = {&window};
  return std::move(ensemble_sample_many<T>(denoiser, std::span<const STGWindow* const>(one), schedule, options).front());
}

}  // namespace diffstg
