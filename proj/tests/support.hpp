#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "diffstg/diffusion.hpp"

namespace diffstg::testing {

inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor<double>(shape, std::move(v));
}

/// sum(out * w) with fixed random w, so every output entry reaches the loss.
inline Tensor<double> weighted_sum(const Tensor<double>& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul(out, random_tensor(out.shape(), rng)));
}

/// Max relative error between tape gradients and central differences of f
/// w.r.t. every entry of every input (or an evenly strided subset of about
/// max_per_tensor entries). Denominator floored at `floor`.
inline double grad_check(std::vector<Tensor<double>> inputs,
                         const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                         double h = 1e-6, double floor = 1e-3, std::size_t max_per_tensor = 0) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(f(inputs));
  }
  double worst = 0.0;
  for (auto& x : inputs) {
    std::vector<double> analytic(x.size(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    auto data = x.mutable_data();
    const std::size_t stride = max_per_tensor && x.size() > max_per_tensor ? x.size() / max_per_tensor : 1;
    for (std::size_t i = 0; i < x.size(); i += stride) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = f(inputs).item();
      data[i] = saved - h;
      const double down = f(inputs).item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
  }
  return worst;
}

/// Window with random standardized values and a mask over the first T_h steps.
inline STGWindow make_window(std::shared_ptr<const Graph> graph, std::size_t history, std::size_t horizon,
                             std::mt19937_64& rng, std::size_t start = 0) {
  STGWindow w;
  w.nodes = graph->num_nodes();
  w.history = history;
  w.horizon = horizon;
  w.start = start;
  w.graph = std::move(graph);
  std::normal_distribution<double> normal(0.0, 1.0);
  w.x_all.resize(w.nodes * w.length());
  for (auto& x : w.x_all) x = normal(rng);
  w.mask.assign(w.nodes * w.length(), 0);
  for (std::size_t v = 0; v < w.nodes; ++v) {
    for (std::size_t t = 0; t < history; ++t) w.mask[v * w.length() + t] = 1;
  }
  return w;
}

template <typename T>
struct FnDenoiser final : Denoiser<T> {
  using Fn = std::function<Tensor<T>(const Tensor<T>&, const Tensor<T>&, std::span<const int>)>;
  explicit FnDenoiser(Fn f) : fn(std::move(f)) {}
  Tensor<T> predict_noise(const Tensor<T>& x_n, const Tensor<T>& condition, std::span<const int> steps,
                          const Graph&) const override {
    return fn(x_n, condition, steps);
  }
  Fn fn;
};

template <typename T>
FnDenoiser<T> zero_denoiser() {
  return FnDenoiser<T>([](const Tensor<T>& x, const Tensor<T>&, std::span<const int>) { return Tensor<T>(x.shape()); });
}

}  // namespace diffstg::testing
