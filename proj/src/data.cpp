#include "diffstg/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace diffstg {
namespace {

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view cell, double& out) {
  cell = trim(cell);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

}  // namespace

STGDataset load_csv(const std::filesystem::path& signals_path, const std::filesystem::path& adjacency_path) {
  std::ifstream in(signals_path);
  if (!in) throw std::runtime_error("cannot open signals file " + signals_path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(signals_path.string() + ": empty file");
  const std::size_t nodes = split_cells(line).size();

  STGDataset ds;
  ds.nodes = nodes;
  std::size_t row = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_cells(line);
    if (cells.size() != nodes) {
      throw std::runtime_error(fmt::format("{}: line {} has {} columns, header has {}", signals_path.string(),
                                           lineno, cells.size(), nodes));
    }
    for (std::size_t c = 0; c < nodes; ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        throw std::runtime_error(fmt::format("{}: missing or invalid value '{}' at line {}, column {}",
                                             signals_path.string(), trim(cells[c]), lineno, c + 1));
      }
      ds.signals.push_back(v);
    }
    ++row;
  }
  ds.rows = row;
  if (ds.rows == 0) throw std::runtime_error(signals_path.string() + ": no data rows");

  auto graph = std::make_shared<Graph>(load_adjacency_csv(adjacency_path));
  if (graph->num_nodes() != nodes) {
    throw std::runtime_error(fmt::format("node count mismatch: {} has {} columns but {} describes {} nodes",
                                         signals_path.string(), nodes, adjacency_path.string(), graph->num_nodes()));
  }
  ds.graph = std::move(graph);
  return ds;
}

void write_signals_csv(const std::filesystem::path& path, const STGDataset& dataset) {
  if (dataset.features != 1) throw std::invalid_argument("write_signals_csv: only F = 1 is supported");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t v = 0; v < dataset.nodes; ++v) out << (v ? "," : "") << v;
  out << "\n";
  std::string buf;
  for (std::size_t t = 0; t < dataset.rows; ++t) {
    buf.clear();
    for (std::size_t v = 0; v < dataset.nodes; ++v) {
      if (v) buf += ',';
      buf += fmt::format("{:.9g}", dataset.value(t, v));
    }
    out << buf << "\n";
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

SplitRanges chronological_split(std::size_t rows, std::size_t window_length, SplitRatios ratios) {
  const double total = ratios.train + ratios.val + ratios.test;
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0)) throw std::invalid_argument("split ratios must be positive");
  const auto cut1 = static_cast<std::size_t>(std::floor(static_cast<double>(rows) * ratios.train / total));
  const auto cut2 = static_cast<std::size_t>(std::floor(static_cast<double>(rows) * (ratios.train + ratios.val) / total));
  SplitRanges s{{0, cut1}, {cut1, cut2}, {cut2, rows}};
  const std::pair<const char*, IndexRange> named[] = {{"train", s.train}, {"val", s.val}, {"test", s.test}};
  for (const auto& [name, r] : named) {
    if (r.size() < window_length) {
      throw std::invalid_argument(fmt::format("{} split has {} rows, fewer than one window of {}", name, r.size(),
                                              window_length));
    }
  }
  return s;
}

std::size_t window_count(IndexRange range, std::size_t length, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("window stride must be positive");
  if (range.size() < length) return 0;
  return (range.size() - length) / stride + 1;
}

NormStats compute_norm_stats(const STGDataset& dataset, IndexRange train) {
  if (train.size() == 0 || train.end > dataset.rows) throw std::invalid_argument("compute_norm_stats: bad train range");
  NormStats s;
  s.nodes = dataset.nodes;
  s.features = dataset.features;
  const std::size_t k = dataset.nodes * dataset.features;
  s.mean.assign(k, 0.0);
  s.stddev.assign(k, 0.0);
  for (std::size_t t = train.begin; t < train.end; ++t) {
    for (std::size_t i = 0; i < k; ++i) s.mean[i] += dataset.signals[t * k + i];
  }
  for (auto& m : s.mean) m /= static_cast<double>(train.size());
  for (std::size_t t = train.begin; t < train.end; ++t) {
    for (std::size_t i = 0; i < k; ++i) {
      const double d = dataset.signals[t * k + i] - s.mean[i];
      s.stddev[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    double& sd = s.stddev[i];
    sd = std::sqrt(sd / static_cast<double>(train.size()));
    // rounding in the mean leaves ~1e-16 spread on a constant series
    if (!(sd > 1e-12 * std::max(1.0, std::abs(s.mean[i])))) {
      sd = 1.0;
      s.mean[i] = dataset.signals[train.begin * k + i];
    }
  }
  return s;
}

std::vector<STGWindow> make_windows(const STGDataset& dataset, IndexRange split, std::shared_ptr<const NormStats> stats,
                                    std::size_t history, std::size_t horizon, std::size_t stride) {
  const std::size_t len = history + horizon;
  if (history == 0 || horizon == 0) throw std::invalid_argument("make_windows: T_h and T_p must be positive");
  if (split.size() < len || split.end > dataset.rows) {
    throw std::invalid_argument(fmt::format("make_windows: split [{}, {}) cannot hold a window of {}", split.begin,
                                            split.end, len));
  }
  if (!stats || stats->nodes != dataset.nodes || stats->features != dataset.features) {
    throw std::invalid_argument("make_windows: normalization stats do not match dataset");
  }
  std::vector<STGWindow> out;
  out.reserve(window_count(split, len, stride));
  for (std::size_t s = split.begin; s + len <= split.end; s += stride) {
    STGWindow w;
    w.features = dataset.features;
    w.nodes = dataset.nodes;
    w.history = history;
    w.horizon = horizon;
    w.start = s;
    w.graph = dataset.graph;
    w.norm = stats;
    w.x_all.resize(w.features * w.nodes * len);
    w.mask.resize(w.nodes * len);
    for (std::size_t f = 0; f < w.features; ++f) {
      for (std::size_t v = 0; v < w.nodes; ++v) {
        for (std::size_t t = 0; t < len; ++t) {
          w.x_all[(f * w.nodes + v) * len + t] = stats->standardize(v, f, dataset.value(s + t, v, f));
        }
      }
    }
    for (std::size_t v = 0; v < w.nodes; ++v) {
      for (std::size_t t = 0; t < len; ++t) w.mask[v * len + t] = t < history ? 1 : 0;
    }
    out.push_back(std::move(w));
  }
  return out;
}

double restore_value(const STGWindow& window, std::size_t f, std::size_t v, double z) {
  return window.norm->restore(v, f, z);
}

void SyntheticSpec::validate() const {
  if (nodes < 3) throw std::invalid_argument("synthetic ring needs at least 3 nodes");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("synthetic rho must lie in [0, 1) for stationarity");
  if (!(lambda >= 0.0 && lambda < 1.0)) throw std::invalid_argument("synthetic lambda must lie in [0, 1)");
  if (!(noise_std > 0.0)) throw std::invalid_argument("synthetic noise std must be positive");
  if (length == 0) throw std::invalid_argument("synthetic length must be positive");
}

std::vector<double> synthetic_transition(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t v = spec.nodes;
  const Graph ring = Graph::ring(v);
  std::vector<double> m(v * v, 0.0);
  for (std::size_t i = 0; i < v; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < v; ++j) deg += ring.adjacency()[i * v + j];
    for (std::size_t j = 0; j < v; ++j) {
      const double a = deg > 0 ? ring.adjacency()[i * v + j] / deg : 0.0;
      m[i * v + j] = spec.rho * ((i == j ? 1.0 - spec.lambda : 0.0) + spec.lambda * a);
    }
  }
  for (std::size_t i = 0; i < v; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < v; ++j) row += std::abs(m[i * v + j]);
    if (row >= 1.0) throw std::invalid_argument("synthetic transition is not stationary");
  }
  return m;
}

STGDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  const auto m = synthetic_transition(spec);
  const std::size_t v = spec.nodes;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(v, 0.0), next(v);
  STGDataset ds;
  ds.rows = spec.length;
  ds.nodes = v;
  ds.signals.reserve(spec.length * v);
  ds.graph = std::make_shared<Graph>(Graph::ring(v));
  for (std::size_t t = 0; t < spec.burn_in + spec.length; ++t) {
    for (std::size_t i = 0; i < v; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < v; ++j) acc += m[i * v + j] * x[j];
      next[i] = acc + spec.noise_std * normal(rng);
    }
    x.swap(next);
    if (t >= spec.burn_in) ds.signals.insert(ds.signals.end(), x.begin(), x.end());
  }
  return ds;
}

SyntheticOracle::SyntheticOracle(const SyntheticSpec& spec, std::size_t horizon) : nodes_(spec.nodes), horizon_(horizon) {
  if (horizon == 0) throw std::invalid_argument("oracle horizon must be positive");
  const auto m = synthetic_transition(spec);
  const std::size_t v = nodes_;
  auto multiply = [v](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> c(v * v, 0.0);
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t k = 0; k < v; ++k)
        for (std::size_t j = 0; j < v; ++j) c[i * v + j] += a[i * v + k] * b[k * v + j];
    return c;
  };
  std::vector<double> power(v * v, 0.0);  // M^0
  for (std::size_t i = 0; i < v; ++i) power[i * v + i] = 1.0;
  std::vector<double> variance(v, 0.0);
  stddev_.assign(v * horizon, 0.0);
  const double s2 = spec.noise_std * spec.noise_std;
  for (std::size_t h = 1; h <= horizon; ++h) {
    // var_h = var_{h-1} + s2 * diag(M^{h-1} M^{h-1}^T)
    for (std::size_t i = 0; i < v; ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < v; ++j) d += power[i * v + j] * power[i * v + j];
      variance[i] += s2 * d;
      stddev_[i * horizon + h - 1] = std::sqrt(variance[i]);
    }
    power = multiply(power, m);
    powers_.push_back(power);
  }
}

std::vector<double> SyntheticOracle::mean(std::span<const double> x_t) const {
  const std::size_t v = nodes_;
  if (x_t.size() != v) throw std::invalid_argument("oracle: state size differs from node count");
  std::vector<double> out(v * horizon_);
  for (std::size_t h = 1; h <= horizon_; ++h) {
    const auto& p = powers_[h - 1];
    for (std::size_t i = 0; i < v; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < v; ++j) acc += p[i * v + j] * x_t[j];
      out[i * horizon_ + h - 1] = acc;
    }
  }
  return out;
}

void write_oracle_csv(const std::filesystem::path& path, const STGDataset& dataset, const SyntheticOracle& oracle,
                      std::size_t history) {
  if (oracle.nodes() != dataset.nodes) throw std::invalid_argument("oracle/dataset node count mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "window_start,node,horizon,mean,std\n";
  const std::size_t len = history + oracle.horizon();
  std::string buf;
  for (std::size_t s = 0; s + len <= dataset.rows; ++s) {
    const std::size_t last = s + history - 1;
    const std::span<const double> x_t(dataset.signals.data() + last * dataset.nodes, dataset.nodes);
    const auto mean = oracle.mean(x_t);
    buf.clear();
    for (std::size_t v = 0; v < dataset.nodes; ++v) {
      for (std::size_t h = 1; h <= oracle.horizon(); ++h) {
        buf += fmt::format("{},{},{},{:.9g},{:.9g}\n", s, v, h, mean[v * oracle.horizon() + h - 1], oracle.stddev(v, h));
      }
    }
    out << buf;
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

double OracleTable::mean_at(std::size_t start, std::size_t v, std::size_t h) const {
  if (!has(start)) throw std::out_of_range("oracle table has no window starting at " + std::to_string(start));
  return mean[(static_cast<std::size_t>(index[start]) * nodes + v) * horizon + h - 1];
}

double OracleTable::stddev_at(std::size_t start, std::size_t v, std::size_t h) const {
  if (!has(start)) throw std::out_of_range("oracle table has no window starting at " + std::to_string(start));
  return stddev[(static_cast<std::size_t>(index[start]) * nodes + v) * horizon + h - 1];
}

OracleTable read_oracle_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open oracle file " + path.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "window_start,node,horizon,mean,std") {
    throw std::runtime_error(path.string() + ": unexpected header '" + line + "'");
  }
  struct Row {
    std::size_t start, node, h;
    double mean, sd;
  };
  std::vector<Row> rows;
  std::size_t max_start = 0;
  OracleTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_cells(line);
    double vals[5];
    bool ok = cells.size() == 5;
    for (std::size_t i = 0; ok && i < 5; ++i) ok = parse_double(cells[i], vals[i]);
    if (!ok || vals[0] < 0 || vals[1] < 0 || vals[2] < 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed oracle row");
    }
    Row r{static_cast<std::size_t>(vals[0]), static_cast<std::size_t>(vals[1]), static_cast<std::size_t>(vals[2]),
          vals[3], vals[4]};
    table.nodes = std::max(table.nodes, r.node + 1);
    table.horizon = std::max(table.horizon, r.h);
    max_start = std::max(max_start, r.start);
    rows.push_back(r);
  }
  table.index.assign(max_start + 1, -1);
  std::int64_t slots = 0;
  for (const auto& r : rows) {
    if (table.index[r.start] < 0) table.index[r.start] = slots++;
  }
  const std::size_t per = table.nodes * table.horizon;
  table.mean.assign(static_cast<std::size_t>(slots) * per, std::nan(""));
  table.stddev.assign(table.mean.size(), std::nan(""));
  for (const auto& r : rows) {
    const std::size_t at = (static_cast<std::size_t>(table.index[r.start]) * table.nodes + r.node) * table.horizon + r.h - 1;
    table.mean[at] = r.mean;
    table.stddev[at] = r.sd;
  }
  return table;
}

}  // namespace diffstg
