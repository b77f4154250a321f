#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "diffstg/graph.hpp"

namespace diffstg {

/// Per node/feature z-score parameters, indexed [v * F + f].
struct NormStats {
  std::size_t nodes = 0;
  std::size_t features = 1;
  std::vector<double> mean;
  std::vector<double> stddev;

  double standardize(std::size_t v, std::size_t f, double raw) const {
    return (raw - mean[v * features + f]) / stddev[v * features + f];
  }
  double restore(std::size_t v, std::size_t f, double z) const {
    return z * stddev[v * features + f] + mean[v * features + f];
  }
};

/// One forecasting instance: history and future as a single F x V x T block.
struct STGWindow {
  std::size_t features = 1;
  std::size_t nodes = 0;
  std::size_t history = 0;  // T_h
  std::size_t horizon = 0;  // T_p
  std::vector<double> x_all;         // standardized, [F, V, T] row-major
  std::vector<std::uint8_t> mask;    // [V, T], 1 = observed
  std::size_t start = 0;             // dataset row of the first history step
  std::shared_ptr<const Graph> graph;
  std::shared_ptr<const NormStats> norm;

  std::size_t length() const { return history + horizon; }
  Shape shape() const { return {features, nodes, length()}; }

  double value(std::size_t f, std::size_t v, std::size_t t) const {
    return x_all[(f * nodes + v) * length() + t];
  }

  /// Throws unless dims agree, x_all is finite and the mask is history-only.
  void validate() const;

  template <typename T>
  Tensor<T> x_all_tensor() const {
    return Tensor<T>(shape(), std::vector<T>(x_all.begin(), x_all.end()));
  }

  /// x_all with unobserved positions set to zero (the standardized mean).
  template <typename T>
  Tensor<T> condition() const {
    std::vector<T> out(x_all.size());
    const std::size_t len = length();
    for (std::size_t f = 0; f < features; ++f) {
      for (std::size_t v = 0; v < nodes; ++v) {
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t i = (f * nodes + v) * len + t;
          out[i] = mask[v * len + t] ? static_cast<T>(x_all[i]) : T{0};
        }
      }
    }
    return Tensor<T>(shape(), std::move(out));
  }
};

}  // namespace diffstg
