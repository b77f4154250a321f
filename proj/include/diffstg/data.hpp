#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "diffstg/window.hpp"

namespace diffstg {

/// Time-major node signals on a fixed graph.
struct STGDataset {
  std::size_t rows = 0;      // T_total
  std::size_t nodes = 0;     // V
  std::size_t features = 1;  // F
  std::vector<double> signals;  // [rows, V, F]
  std::shared_ptr<const Graph> graph;
  double interval = 1.0;

  double value(std::size_t t, std::size_t v, std::size_t f = 0) const {
    return signals[(t * nodes + v) * features + f];
  }
};

/// Signals CSV: header row of node ids, then one row per time step.
STGDataset load_csv(const std::filesystem::path& signals_path, const std::filesystem::path& adjacency_path);
void write_signals_csv(const std::filesystem::path& path, const STGDataset& dataset);

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - begin; }
};

struct SplitRanges {
  IndexRange train, val, test;
};

struct SplitRatios {
  double train = 6, val = 2, test = 2;
};

/// Contiguous train/val/test row ranges in time order. Each split must hold
/// at least one window of `window_length` rows.
SplitRanges chronological_split(std::size_t rows, std::size_t window_length, SplitRatios ratios = {});

/// Number of windows of `length` rows starting every `stride` rows inside `range`.
std::size_t window_count(IndexRange range, std::size_t length, std::size_t stride = 1);

/// Per node/feature mean and standard deviation over `train` rows only.
/// A zero deviation is replaced by 1 so constant series standardize to 0.
NormStats compute_norm_stats(const STGDataset& dataset, IndexRange train);

/// Standardized windows fully inside `split`, history mask on the first T_h steps.
std::vector<STGWindow> make_windows(const STGDataset& dataset, IndexRange split,
                                    std::shared_ptr<const NormStats> stats, std::size_t history = 12,
                                    std::size_t horizon = 12, std::size_t stride = 1);

/// Raw-scale value of a standardized window entry.
double restore_value(const STGWindow& window, std::size_t f, std::size_t v, double z);

/// Linear-Gaussian process on a ring:
/// x_t = rho ((1 - lambda) I + lambda A_rownorm) x_{t-1} + noise_std * eps_t.
struct SyntheticSpec {
  std::size_t nodes = 8;
  double rho = 0.9;
  double lambda = 0.4;
  double noise_std = 1.0;
  std::size_t length = 20000;
  std::size_t burn_in = 1000;

  void validate() const;
};

/// Transition matrix of the synthetic process, row-major V x V.
std::vector<double> synthetic_transition(const SyntheticSpec& spec);

STGDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Exact predictive marginals of the synthetic process: given x_t, the
/// value at t + h is Gaussian with mean M^h x_t and covariance
/// noise_std^2 sum_{j<h} M^j (M^j)^T.
class SyntheticOracle {
 public:
  SyntheticOracle(const SyntheticSpec& spec, std::size_t horizon);

  std::size_t horizon() const { return horizon_; }
  std::size_t nodes() const { return nodes_; }
  /// Predictive means for h = 1..horizon, laid out [V, horizon].
  std::vector<double> mean(std::span<const double> x_t) const;
  double stddev(std::size_t v, std::size_t h) const { return stddev_[v * horizon_ + h - 1]; }

 private:
  std::size_t nodes_, horizon_;
  std::vector<std::vector<double>> powers_;  // M^h, h = 1..horizon
  std::vector<double> stddev_;                // [V, horizon]
};

/// Oracle CSV rows: window_start,node,horizon,mean,std (raw units), one row per
/// window start, node and horizon 1..T_p, for every window of the series.
void write_oracle_csv(const std::filesystem::path& path, const STGDataset& dataset, const SyntheticOracle& oracle,
                      std::size_t history);

struct OracleTable {
  std::size_t nodes = 0, horizon = 0;
  std::vector<std::int64_t> index;  // window start -> slot, -1 if absent
  std::vector<double> mean, stddev; // per slot [V, horizon]

  bool has(std::size_t start) const { return start < index.size() && index[start] >= 0; }
  double mean_at(std::size_t start, std::size_t v, std::size_t h) const;
  double stddev_at(std::size_t start, std::size_t v, std::size_t h) const;
};

OracleTable read_oracle_csv(const std::filesystem::path& path);

}  // namespace diffstg
