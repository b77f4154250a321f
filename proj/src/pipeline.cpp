#include "diffstg/pipeline.hpp"

#include <fmt/format.h>

#include <fstream>

namespace diffstg {

const std::vector<STGWindow>& Experiment::windows(const std::string& split_name) const {
  if (split_name == "train") return train;
  if (split_name == "val") return val;
  if (split_name == "test") return test;
  throw std::invalid_argument("unknown split '" + split_name + "' (expected train, val or test)");
}

Experiment prepare_experiment(const STGDataset& dataset, std::size_t history, std::size_t horizon,
                              std::size_t stride) {
  Experiment e;
  e.split = chronological_split(dataset.rows, history + horizon);
  e.stats = std::make_shared<const NormStats>(compute_norm_stats(dataset, e.split.train));
  e.train = make_windows(dataset, e.split.train, e.stats, history, horizon, stride);
  e.val = make_windows(dataset, e.split.val, e.stats, history, horizon, stride);
  e.test = make_windows(dataset, e.split.test, e.stats, history, horizon, stride);
  return e;
}

EvalPair evaluate_persistence(std::span<const STGWindow> train, std::span<const STGWindow* const> windows,
                              std::size_t samples, std::uint64_t seed) {
  if (windows.empty()) throw std::invalid_argument("evaluate: no windows");
  ResidualPool pool(train);
  EnsembleEvaluator eval(windows[0]->horizon);
  for (const auto* w : windows) {
    Rng rng = derive_rng(seed, w->start, 3);
    eval.add(persistence_ensemble(*w, pool, samples, rng), *w);
  }
  return eval.report();
}

EvalPair evaluate_oracle(const OracleTable& oracle, std::span<const STGWindow* const> windows, std::size_t samples,
                         std::uint64_t seed) {
  if (windows.empty()) throw std::invalid_argument("evaluate: no windows");
  EnsembleEvaluator eval(windows[0]->horizon);
  for (const auto* w : windows) {
    Rng rng = derive_rng(seed, w->start, 4);
    eval.add(oracle_ensemble(*w, oracle, samples, rng), *w);
  }
  return eval.report();
}

void write_report_csv(const std::filesystem::path& path, std::span<const ReportRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kReportColumns << '\n';
  auto line = [&](const ReportRow& r, const std::string& horizon, double cs, double ms, double rs, double cr,
                  double mr, double rr, std::size_t count) {
    out << fmt::format("{},{},{},{},{},{},{},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{}\n", r.model, r.split,
                       horizon, r.samples, r.reuse, r.subset, r.mode, cs, ms, rs, cr, mr, rr, count);
  };
  for (const auto& r : rows) {
    const auto& s = r.metrics.standardized;
    const auto& w = r.metrics.raw;
    const std::size_t per_h = s.crps_h.empty() ? 0 : s.count / s.crps_h.size();
    for (std::size_t h = 0; h < s.crps_h.size(); ++h) {
      line(r, std::to_string(h + 1), s.crps_h[h], s.mae_h[h], s.rmse_h[h], w.crps_h[h], w.mae_h[h], w.rmse_h[h],
           per_h);
    }
    line(r, "all", s.crps, s.mae, s.rmse, w.crps, w.mae, w.rmse, s.count);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

template <typename T>
void write_band_csv(const std::filesystem::path& path, const ForecastEnsemble<T>& ensemble, const STGWindow& window) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "node,horizon,truth,mean,p5,p25,p75,p95\n";
  const std::size_t V = window.nodes, P = window.horizon;
  std::vector<double> xs(ensemble.size());
  for (std::size_t v = 0; v < V; ++v) {
    for (std::size_t h = 0; h < P; ++h) {
      double mean = 0.0;
      for (std::size_t s = 0; s < xs.size(); ++s) {
        xs[s] = restore_value(window, 0, v, static_cast<double>(ensemble.samples[s].data()[v * P + h]));
        mean += xs[s] / static_cast<double>(xs.size());
      }
      std::sort(xs.begin(), xs.end());
      const double truth = restore_value(window, 0, v, window.value(0, v, window.history + h));
      out << fmt::format("{},{},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g}\n", v, h + 1, truth, mean,
                         sorted_quantile(xs, 0.05), sorted_quantile(xs, 0.25), sorted_quantile(xs, 0.75),
                         sorted_quantile(xs, 0.95));
    }
  }
}

template void write_band_csv<float>(const std::filesystem::path&, const ForecastEnsemble<float>&, const STGWindow&);
template void write_band_csv<double>(const std::filesystem::path&, const ForecastEnsemble<double>&, const STGWindow&);

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void write_bench_csv(const std::filesystem::path& path, std::span<const BenchRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "M,k,S,trajectories,median_seconds\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{:.6f}\n", r.subset, r.reuse, r.samples, r.trajectories, r.median_seconds);
  }
}

}  // namespace diffstg
