#pragma once

#include <span>
#include <vector>

#include "diffstg/data.hpp"
#include "diffstg/diffusion.hpp"

namespace diffstg {

/// CRPS of the empirical distribution of `samples` at `obs`:
/// (1/S) sum_i |x_i - y| - (1/(2 S^2)) sum_i sum_j |x_i - x_j|.
double crps_empirical(std::span<const double> samples, double obs);

/// Linear-interpolated quantile of already sorted values, p in [0, 1].
double sorted_quantile(std::span<const double> sorted, double p);

struct EvalReport {
  double crps = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  std::vector<double> crps_h, mae_h, rmse_h;  // per horizon step
  std::size_t count = 0;                      // evaluated points
};

/// Accumulates CRPS and point-forecast errors (ensemble mean) per horizon.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::size_t horizon);

  /// h is the 0-based horizon index.
  void add(std::span<const double> samples, double truth, std::size_t h);
  EvalReport report() const;

 private:
  std::size_t horizon_;
  std::vector<double> crps_, abs_, sq_;
  std::vector<std::size_t> n_;
};

struct EvalPair {
  EvalReport standardized;
  EvalReport raw;
};

/// Scores ensembles against window futures, in standardized and raw units.
class EnsembleEvaluator {
 public:
  explicit EnsembleEvaluator(std::size_t horizon) : std_(horizon), raw_(horizon) {}

  template <typename T>
  void add(const ForecastEnsemble<T>& ensemble, const STGWindow& window);

  EvalPair report() const { return {std_.report(), raw_.report()}; }

 private:
  MetricAccumulator std_, raw_;
};

/// Single-window evaluation against truth [F, V, T_p] (standardized units);
/// raw-unit metrics use `stats` when given.
template <typename T>
EvalPair evaluate(const ForecastEnsemble<T>& ensemble, const Tensor<T>& truth, const NormStats* stats = nullptr);

/// Future-horizon residuals x[T_h - 1 + h] - x[T_h - 1] of training windows.
class ResidualPool {
 public:
  explicit ResidualPool(std::span<const STGWindow> train_windows);
  std::size_t size() const { return residuals_.size(); }
  const std::vector<double>& at(std::size_t i) const { return residuals_[i]; }

 private:
  std::vector<std::vector<double>> residuals_;  // each [F, V, T_p]
};

/// Last observed value plus a bootstrapped training residual trajectory.
ForecastEnsemble<double> persistence_ensemble(const STGWindow& window, const ResidualPool& pool, std::size_t samples,
                                              Rng& rng);

/// Independent draws from the exact predictive marginals in `oracle`,
/// converted to the window's standardized units.
ForecastEnsemble<double> oracle_ensemble(const STGWindow& window, const OracleTable& oracle, std::size_t samples,
                                         Rng& rng);

// ---------------------------------------------------------------------------

template <typename T>
void EnsembleEvaluator::add(const ForecastEnsemble<T>& ensemble, const STGWindow& window) {
  if (ensemble.samples.empty()) throw std::invalid_argument("evaluate: empty ensemble");
  const Shape expected{window.features, window.nodes, window.horizon};
  std::vector<double> column(ensemble.size()), raw(ensemble.size());
  for (std::size_t f = 0; f < window.features; ++f) {
    for (std::size_t v = 0; v < window.nodes; ++v) {
      for (std::size_t h = 0; h < window.horizon; ++h) {
        for (std::size_t s = 0; s < ensemble.size(); ++s) {
          const auto& sample = ensemble.samples[s];
          if (sample.shape() != expected) throw_shape_error("evaluate", "sample vs window future", sample.shape(), expected);
          column[s] = static_cast<double>(sample.data()[(f * window.nodes + v) * window.horizon + h]);
          raw[s] = window.norm ? window.norm->restore(v, f, column[s]) : column[s];
        }
        const double truth = window.value(f, v, window.history + h);
        std_.add(column, truth, h);
        raw_.add(raw, window.norm ? window.norm->restore(v, f, truth) : truth, h);
      }
    }
  }
}

template <typename T>
EvalPair evaluate(const ForecastEnsemble<T>& ensemble, const Tensor<T>& truth, const NormStats* stats) {
  if (ensemble.samples.empty()) throw std::invalid_argument("evaluate: empty ensemble");
  if (truth.rank() != 3) throw_shape_error("evaluate", "truth must be [F,V,T_p]", truth.shape(), ensemble.samples[0].shape());
  const std::size_t features = truth.dim(0), nodes = truth.dim(1), horizon = truth.dim(2);
  MetricAccumulator standardized(horizon), raw_acc(horizon);
  std::vector<double> column(ensemble.size()), raw(ensemble.size());
  for (std::size_t f = 0; f < features; ++f) {
    for (std::size_t v = 0; v < nodes; ++v) {
      for (std::size_t h = 0; h < horizon; ++h) {
        const std::size_t i = (f * nodes + v) * horizon + h;
        for (std::size_t s = 0; s < ensemble.size(); ++s) {
          if (ensemble.samples[s].shape() != truth.shape()) {
            throw_shape_error("evaluate", "sample vs truth", ensemble.samples[s].shape(), truth.shape());
          }
          column[s] = static_cast<double>(ensemble.samples[s].data()[i]);
          raw[s] = stats ? stats->restore(v, f, column[s]) : column[s];
        }
        const double y = static_cast<double>(truth.data()[i]);
        standardized.add(column, y, h);
        raw_acc.add(raw, stats ? stats->restore(v, f, y) : y, h);
      }
    }
  }
  return {standardized.report(), raw_acc.report()};
}

}  // namespace diffstg
