#include "diffstg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace diffstg {

double crps_empirical(std::span<const double> samples, double obs) {
  if (samples.empty()) throw std::invalid_argument("crps_empirical: empty sample set");
  const auto s = static_cast<double>(samples.size());
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  double abs_err = 0.0;
  for (double x : sorted) abs_err += std::abs(x - obs);
  // sum_{i<j} (x_(j) - x_(i)) = sum_k x_(k) (2k - S + 1), k 0-based
  double spread = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    spread += sorted[k] * (2.0 * static_cast<double>(k) - s + 1.0);
  }
  const double crps = abs_err / s - spread / (s * s);
  return std::max(crps, 0.0);
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("sorted_quantile: empty input");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sorted_quantile: p outside [0, 1]");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

MetricAccumulator::MetricAccumulator(std::size_t horizon)
    : horizon_(horizon), crps_(horizon, 0.0), abs_(horizon, 0.0), sq_(horizon, 0.0), n_(horizon, 0) {
  if (horizon == 0) throw std::invalid_argument("metric accumulator needs a positive horizon");
}

void MetricAccumulator::add(std::span<const double> samples, double truth, std::size_t h) {
  if (h >= horizon_) throw std::out_of_range("horizon index " + std::to_string(h) + " >= " + std::to_string(horizon_));
  if (samples.empty()) throw std::invalid_argument("metrics: empty ensemble");
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= static_cast<double>(samples.size());
  crps_[h] += crps_empirical(samples, truth);
  abs_[h] += std::abs(mean - truth);
  sq_[h] += (mean - truth) * (mean - truth);
  ++n_[h];
}

EvalReport MetricAccumulator::report() const {
  EvalReport r;
  double c = 0.0, a = 0.0, q = 0.0;
  for (std::size_t h = 0; h < horizon_; ++h) {
    const double n = n_[h] ? static_cast<double>(n_[h]) : 1.0;
    r.crps_h.push_back(crps_[h] / n);
    r.mae_h.push_back(abs_[h] / n);
    r.rmse_h.push_back(std::sqrt(sq_[h] / n));
    c += crps_[h];
    a += abs_[h];
    q += sq_[h];
    r.count += n_[h];
  }
  const double total = r.count ? static_cast<double>(r.count) : 1.0;
  r.crps = c / total;
  r.mae = a / total;
  r.rmse = std::sqrt(q / total);
  return r;
}

ResidualPool::ResidualPool(std::span<const STGWindow> train_windows) {
  for (const auto& w : train_windows) {
    std::vector<double> r(w.features * w.nodes * w.horizon);
    for (std::size_t f = 0; f < w.features; ++f) {
      for (std::size_t v = 0; v < w.nodes; ++v) {
        const double last = w.value(f, v, w.history - 1);
        for (std::size_t h = 0; h < w.horizon; ++h) {
          r[(f * w.nodes + v) * w.horizon + h] = w.value(f, v, w.history + h) - last;
        }
      }
    }
    residuals_.push_back(std::move(r));
  }
  if (residuals_.empty()) throw std::invalid_argument("residual pool needs at least one training window");
}

ForecastEnsemble<double> persistence_ensemble(const STGWindow& window, const ResidualPool& pool, std::size_t samples,
                                              Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  ForecastEnsemble<double> ens;
  ens.trajectories = samples;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto& res = pool.at(pick(rng));
    if (res.size() != window.features * window.nodes * window.horizon) {
      throw std::invalid_argument("persistence: residual pool shape differs from window");
    }
    std::vector<double> out(res.size());
    for (std::size_t f = 0; f < window.features; ++f) {
      for (std::size_t v = 0; v < window.nodes; ++v) {
        const double last = window.value(f, v, window.history - 1);
        for (std::size_t h = 0; h < window.horizon; ++h) {
          const std::size_t i = (f * window.nodes + v) * window.horizon + h;
          out[i] = last + res[i];
        }
      }
    }
    ens.samples.emplace_back(Shape{window.features, window.nodes, window.horizon}, std::move(out));
    ens.provenance.push_back({s, 0});
  }
  return ens;
}

ForecastEnsemble<double> oracle_ensemble(const STGWindow& window, const OracleTable& oracle, std::size_t samples,
                                         Rng& rng) {
  if (window.features != 1) throw std::invalid_argument("oracle ensembles support F = 1 only");
  if (oracle.nodes != window.nodes || oracle.horizon < window.horizon) {
    throw std::invalid_argument("oracle table does not cover the window's nodes/horizon");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  ForecastEnsemble<double> ens;
  ens.trajectories = samples;
  for (std::size_t s = 0; s < samples; ++s) {
    std::vector<double> out(window.nodes * window.horizon);
    for (std::size_t v = 0; v < window.nodes; ++v) {
      for (std::size_t h = 0; h < window.horizon; ++h) {
        const double raw = oracle.mean_at(window.start, v, h + 1) + oracle.stddev_at(window.start, v, h + 1) * normal(rng);
        out[v * window.horizon + h] = window.norm ? window.norm->standardize(v, 0, raw) : raw;
      }
    }
    ens.samples.emplace_back(Shape{1, window.nodes, window.horizon}, std::move(out));
    ens.provenance.push_back({s, 0});
  }
  return ens;
}

}  // namespace diffstg
