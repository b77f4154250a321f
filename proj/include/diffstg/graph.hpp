#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "diffstg/ops.hpp"

namespace diffstg {

enum class GcnActivation { identity, relu };

GcnActivation parse_gcn_activation(std::string_view name);
std::string_view to_string(GcnActivation act);

/// D^{-1/2} (A + I) D^{-1/2} with D_ii = sum_j (A + I)_ij, for a row-major
/// V x V nonnegative matrix. Asymmetric input is normalized as given.
std::vector<double> normalize_adjacency(std::span<const double> adjacency, std::size_t num_nodes);

/// Fixed weighted graph with its cached GCN-normalized adjacency.
class Graph {
 public:
  Graph(std::size_t num_nodes, std::vector<double> adjacency);

  /// Undirected ring 0-1-...-(V-1)-0 with unit weights.
  static Graph ring(std::size_t num_nodes);

  std::size_t num_nodes() const { return num_nodes_; }
  std::span<const double> adjacency() const { return adjacency_; }
  std::span<const double> normalized() const { return normalized_; }
  double normalized(std::size_t i, std::size_t j) const { return normalized_[i * num_nodes_ + j]; }

  template <typename T>
  Tensor<T> normalized_tensor() const {
    return Tensor<T>(Shape{num_nodes_, num_nodes_},
                     std::vector<T>(normalized_.begin(), normalized_.end()));
  }

 private:
  std::size_t num_nodes_;
  std::vector<double> adjacency_;
  std::vector<double> normalized_;
};

/// Reads "dense" (V rows of V weights) or "edges" (rows src,dst,weight) CSV.
/// An edge-list header may declare the node count as "edges,<V>"; otherwise
/// V is `num_nodes` if given, else max node id + 1.
Graph load_adjacency_csv(const std::filesystem::path& path,
                         std::optional<std::size_t> num_nodes = std::nullopt);
void write_adjacency_csv(const std::filesystem::path& path, const Graph& graph);

template <typename T>
Tensor<T> activate(const Tensor<T>& x, GcnActivation act) {
  return act == GcnActivation::relu ? relu(x) : x;
}

/// act(A_gcn H W) for node features H [V, C] and weights W [C, C].
template <typename T>
Tensor<T> graph_conv(const Tensor<T>& h, const Graph& graph, const Tensor<T>& w,
                     GcnActivation act = GcnActivation::identity) {
  if (h.rank() != 2 || h.dim(0) != graph.num_nodes()) {
    throw_shape_error("graph_conv", "features must be [V, C] with V = graph nodes", h.shape(),
                      Shape{graph.num_nodes(), graph.num_nodes()});
  }
  if (w.rank() != 2 || w.dim(0) != h.dim(1) || w.dim(1) != h.dim(1)) {
    throw_shape_error("graph_conv", "weights must be [C, C]", h.shape(), w.shape());
  }
  return activate(matmul(graph.normalized_tensor<T>(), matmul(h, w)), act);
}

/// Graph convolution over a batch of temporal feature maps.
///
/// h: [B, C, V, L]. Each node's C x L block is flattened into a feature row
/// of width C*L, multiplied by w [C*L, C*L], then aggregated over nodes with
/// `aggregation` [V, V] (identity aggregation when null).
template <typename T>
Tensor<T> spatial_conv(const Tensor<T>& h, const Tensor<T>* aggregation, const Tensor<T>& w,
                       GcnActivation act) {
  if (h.rank() != 4) throw_shape_error("spatial_conv", "expected [B,C,V,L]", h.shape(), w.shape());
  const std::size_t b = h.dim(0), c = h.dim(1), v = h.dim(2), l = h.dim(3);
  if (w.rank() != 2 || w.dim(0) != c * l || w.dim(1) != c * l) {
    throw_shape_error("spatial_conv", "weights must be [C*L, C*L]", h.shape(), w.shape());
  }
  if (aggregation != nullptr && aggregation->shape() != Shape{v, v}) {
    throw_shape_error("spatial_conv", "aggregation must be [V,V]", h.shape(), aggregation->shape());
  }
  auto rows = reshape(permute(h, {2, 0, 1, 3}), Shape{v * b, c * l});
  auto mixed = matmul(rows, w);
  if (aggregation != nullptr) {
    mixed = matmul(*aggregation, reshape(mixed, Shape{v, b * c * l}));
  }
  auto out = permute(reshape(mixed, Shape{v, b, c, l}), {1, 2, 0, 3});
  return activate(out, act);
}

}  // namespace diffstg
