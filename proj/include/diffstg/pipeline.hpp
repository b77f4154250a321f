#pragma once

// Glue shared by the command-line tool and the acceptance harness: dataset
// splitting, chunked ensemble evaluation, report/band CSVs, sampling timings.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "diffstg/data.hpp"
#include "diffstg/metrics.hpp"

namespace diffstg {

struct Experiment {
  SplitRanges split;
  std::shared_ptr<const NormStats> stats;
  std::vector<STGWindow> train, val, test;

  const std::vector<STGWindow>& windows(const std::string& split_name) const;
};

/// Chronological 6:2:2 split, train-split standardization, windows per split.
Experiment prepare_experiment(const STGDataset& dataset, std::size_t history, std::size_t horizon,
                              std::size_t stride = 1);

/// Model ensembles scored over `windows`, sampled `chunk` windows at a time.
template <typename T>
EvalPair evaluate_model(const Denoiser<T>& model, std::span<const STGWindow* const> windows,
                        const NoiseSchedule& schedule, const EnsembleOptions& options, std::size_t chunk = 16) {
  if (windows.empty()) throw std::invalid_argument("evaluate: no windows");
  EnsembleEvaluator eval(windows[0]->horizon);
  for (std::size_t i = 0; i < windows.size(); i += chunk) {
    auto part = windows.subspan(i, std::min(chunk, windows.size() - i));
    auto ensembles = ensemble_sample_many<T>(model, part, schedule, options);
    for (std::size_t j = 0; j < part.size(); ++j) eval.add(ensembles[j], *part[j]);
  }
  return eval.report();
}

/// Persistence baseline: last observed value plus residuals bootstrapped from `train`.
EvalPair evaluate_persistence(std::span<const STGWindow> train, std::span<const STGWindow* const> windows,
                              std::size_t samples, std::uint64_t seed);

/// Gaussian samples from the exact predictive marginals in `oracle`.
EvalPair evaluate_oracle(const OracleTable& oracle, std::span<const STGWindow* const> windows, std::size_t samples,
                         std::uint64_t seed);

struct ReportRow {
  std::string model;
  std::string split;
  std::size_t samples = 0, reuse = 1;
  int subset = 0;
  std::string mode;
  EvalPair metrics;
};

inline constexpr const char* kReportColumns =
    "model,split,horizon,S,k,M,mode,crps_std,mae_std,rmse_std,crps_raw,mae_raw,rmse_raw,count";

/// One line per horizon (1-based) and a summary line with horizon "all".
void write_report_csv(const std::filesystem::path& path, std::span<const ReportRow> rows);

/// Raw-unit truth, ensemble mean and 5/25/75/95 percentiles per node and horizon.
template <typename T>
void write_band_csv(const std::filesystem::path& path, const ForecastEnsemble<T>& ensemble, const STGWindow& window);

struct BenchRow {
  int subset = 0;
  std::size_t reuse = 1, samples = 0, trajectories = 0;
  double median_seconds = 0.0;
};

double median(std::vector<double> values);

/// Median wall-clock of `runs` ensemble draws for the given windows.
template <typename T>
BenchRow bench_sampling(const Denoiser<T>& model, std::span<const STGWindow* const> windows,
                        const NoiseSchedule& schedule, const EnsembleOptions& options, std::size_t runs = 5) {
  BenchRow row;
  row.subset = options.sampler.subset_size ? options.sampler.subset_size : schedule.steps();
  row.reuse = options.reuse;
  row.samples = options.samples;
  row.trajectories = trajectory_count(options.samples, options.reuse);
  std::vector<double> times;
  for (std::size_t r = 0; r < runs; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    auto e = ensemble_sample_many<T>(model, windows, schedule, options);
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  row.median_seconds = median(times);
  return row;
}

void write_bench_csv(const std::filesystem::path& path, std::span<const BenchRow> rows);

}  // namespace diffstg
