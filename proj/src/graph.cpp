#include "diffstg/graph.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace diffstg {

GcnActivation parse_gcn_activation(std::string_view name) {
  if (name == "identity") return GcnActivation::identity;
  if (name == "relu") return GcnActivation::relu;
  throw std::invalid_argument("unknown gcn activation '" + std::string(name) + "' (identity|relu)");
}

std::string_view to_string(GcnActivation act) {
  return act == GcnActivation::relu ? "relu" : "identity";
}

std::vector<double> normalize_adjacency(std::span<const double> adjacency, std::size_t num_nodes) {
  if (num_nodes == 0 || adjacency.size() != num_nodes * num_nodes) {
    throw std::invalid_argument("normalize_adjacency: expected a square " + std::to_string(num_nodes) +
                                "x" + std::to_string(num_nodes) + " matrix, got " +
                                std::to_string(adjacency.size()) + " entries");
  }
  std::vector<double> a_hat(adjacency.begin(), adjacency.end());
  for (std::size_t i = 0; i < num_nodes; ++i) {
    for (std::size_t j = 0; j < num_nodes; ++j) {
      const double w = a_hat[i * num_nodes + j];
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument("normalize_adjacency: entry (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") = " + std::to_string(w) +
                                    " is not a finite nonnegative weight");
      }
    }
    a_hat[i * num_nodes + i] += 1.0;
  }
  std::vector<double> inv_sqrt_deg(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < num_nodes; ++j) d += a_hat[i * num_nodes + j];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < num_nodes; ++i) {
    for (std::size_t j = 0; j < num_nodes; ++j) {
      a_hat[i * num_nodes + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
    }
  }
  return a_hat;
}

Graph::Graph(std::size_t num_nodes, std::vector<double> adjacency)
    : num_nodes_(num_nodes),
      adjacency_(std::move(adjacency)),
      normalized_(normalize_adjacency(adjacency_, num_nodes_)) {}

Graph Graph::ring(std::size_t num_nodes) {
  if (num_nodes < 3) throw std::invalid_argument("ring graph needs at least 3 nodes");
  std::vector<double> a(num_nodes * num_nodes, 0.0);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    const std::size_t next = (i + 1) % num_nodes;
    a[i * num_nodes + next] = 1.0;
    a[next * num_nodes + i] = 1.0;
  }
  return Graph(num_nodes, std::move(a));
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_weight(const std::string& cell, const std::filesystem::path& path, std::size_t line) {
  const std::string t = trim(cell);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size() || !std::isfinite(v)) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": invalid number '" + t + "'");
  }
  return v;
}

}  // namespace

Graph load_adjacency_csv(const std::filesystem::path& path, std::optional<std::size_t> num_nodes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open adjacency file " + path.string());
  std::string header;
  std::getline(in, header);
  header = trim(header);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (trim(line).empty()) continue;
    rows.push_back(split_csv(line));
  }

  if (header == "dense") {
    const std::size_t v = rows.size();
    if (v == 0) throw std::runtime_error(path.string() + ": empty dense adjacency");
    std::vector<double> a;
    for (std::size_t r = 0; r < v; ++r) {
      if (rows[r].size() != v) {
        throw std::runtime_error(path.string() + ":" + std::to_string(r + 2) + ": expected " +
                                 std::to_string(v) + " columns, got " + std::to_string(rows[r].size()));
      }
      for (const auto& cell : rows[r]) a.push_back(parse_weight(cell, path, r + 2));
    }
    if (num_nodes && *num_nodes != v) {
      throw std::runtime_error(path.string() + ": adjacency has " + std::to_string(v) +
                               " nodes, expected " + std::to_string(*num_nodes));
    }
    return Graph(v, std::move(a));
  }
  if (header == "edges" || header.rfind("edges,", 0) == 0) {
    if (header.size() > 6) {
      const double declared = parse_weight(header.substr(6), path, 1);
      if (declared < 1 || declared != std::floor(declared)) {
        throw std::runtime_error(path.string() + ":1: node count must be a positive integer");
      }
      if (num_nodes && *num_nodes != static_cast<std::size_t>(declared)) {
        throw std::runtime_error(path.string() + ": adjacency declares " + header.substr(6) + " nodes, expected " +
                                 std::to_string(*num_nodes));
      }
      num_nodes = static_cast<std::size_t>(declared);
    }
    struct Edge {
      std::size_t src, dst;
      double w;
    };
    std::vector<Edge> edges;
    std::size_t v = num_nodes.value_or(0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != 3) {
        throw std::runtime_error(path.string() + ":" + std::to_string(r + 2) + ": expected src,dst,weight");
      }
      const double s = parse_weight(rows[r][0], path, r + 2);
      const double d = parse_weight(rows[r][1], path, r + 2);
      if (s < 0 || d < 0 || s != std::floor(s) || d != std::floor(d)) {
        throw std::runtime_error(path.string() + ":" + std::to_string(r + 2) + ": node ids must be nonnegative integers");
      }
      edges.push_back({static_cast<std::size_t>(s), static_cast<std::size_t>(d), parse_weight(rows[r][2], path, r + 2)});
      if (!num_nodes) v = std::max({v, edges.back().src + 1, edges.back().dst + 1});
    }
    if (v == 0) throw std::runtime_error(path.string() + ": empty edge list");
    std::vector<double> a(v * v, 0.0);
    for (const auto& e : edges) {
      if (e.src >= v || e.dst >= v) {
        throw std::runtime_error(path.string() + ": edge " + std::to_string(e.src) + "->" +
                                 std::to_string(e.dst) + " outside 0.." + std::to_string(v - 1));
      }
      a[e.src * v + e.dst] = e.w;
    }
    return Graph(v, std::move(a));
  }
  throw std::runtime_error(path.string() + ": first line must be 'dense' or 'edges', got '" + header + "'");
}

void write_adjacency_csv(const std::filesystem::path& path, const Graph& graph) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  const std::size_t v = graph.num_nodes();
  out << "edges," << v << "\n";
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = 0; j < v; ++j) {
      const double w = graph.adjacency()[i * v + j];
      if (w != 0.0) out << i << "," << j << "," << w << "\n";
    }
  }
}

}  // namespace diffstg
