#pragma once

// UGnet noise predictor: a temporal U-structure of spatio-temporal residual
// blocks (gated causal TCN followed by a GCN over the node graph), with a
// sinusoidal noise-level embedding injected at every block.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "diffstg/diffusion.hpp"
#include "diffstg/graph.hpp"
#include "diffstg/serialize.hpp"

namespace diffstg {

struct UGnetConfig {
  std::size_t features = 1;   // F
  std::size_t nodes = 0;      // V
  std::size_t length = 24;    // T = T_h + T_p
  std::size_t channels = 32;  // C
  std::size_t kernel = 3;     // K
  std::size_t depth = 2;      // down (and up) levels
  std::size_t embed_dim = 64; // D_embed
  bool channel_growth = false;
  GcnActivation gcn_activation = GcnActivation::identity;
  // Ablation switches: identity aggregation, pointwise linear TCN, single level.
  bool use_gcn = true;
  bool use_tcn = true;
  bool u_structure = true;

  std::size_t levels() const { return u_structure ? depth : 1; }
  /// 2T rounded up to a multiple of 2^depth; zeros are prepended.
  std::size_t padded_length() const;
  std::size_t level_length(std::size_t level) const;
  std::size_t level_channels(std::size_t level) const;
  void validate() const;

  std::map<std::string, std::string> to_entries() const;
  static UGnetConfig from_entries(const std::map<std::string, std::string>& entries);
};

/// Sinusoidal embedding of diffusion step n: for d = 1..D/2 the pair
/// (cos(n w_d), sin(n w_d)) with w_d = 10000^{-2d/D}.
std::vector<double> noise_embedding(int n, std::size_t embed_dim);

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& h, const Tensor<T>& bias) {
  if (h.rank() != 4 || bias.rank() != 1 || bias.dim(0) != h.dim(1)) {
    throw_shape_error("add_channel_bias", "bias must be [C] for [B,C,V,L]", h.shape(), bias.shape());
  }
  return add(h, broadcast_to(reshape(bias, Shape{1, bias.dim(0), 1, 1}), h.shape()));
}

/// P ⊙ sigmoid(Q) with P, Q causal convolutions of h (left padding K-1).
template <typename T>
Tensor<T> gated_tcn(const Tensor<T>& h, const Tensor<T>& p_kernel, const Tensor<T>& p_bias,
                    const Tensor<T>& q_kernel, const Tensor<T>& q_bias) {
  if (p_kernel.shape() != q_kernel.shape()) {
    throw_shape_error("gated_tcn", "P and Q kernels differ", p_kernel.shape(), q_kernel.shape());
  }
  const std::size_t pad = p_kernel.dim(2) - 1;
  auto p = add_channel_bias(conv1d(h, p_kernel, pad), p_bias);
  auto q = add_channel_bias(conv1d(h, q_kernel, pad), q_bias);
  return mul(p, sigmoid(q));
}

template <typename T>
class UGnet final : public Denoiser<T> {
 public:
  /// Random initialization, uniform in +-1/sqrt(fan_in) for every tensor.
  UGnet(UGnetConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    build([rng = Rng(seed)](const std::string&, const Shape& shape, std::size_t fan_in) mutable {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      std::vector<T> v(numel(shape));
      for (auto& x : v) x = static_cast<T>(dist(rng));
      return Tensor<T>(shape, std::move(v));
    });
  }

  static UGnet zeros(UGnetConfig config) {
    return UGnet(std::move(config), InitTag{},
                 [](const std::string&, const Shape& shape, std::size_t) { return Tensor<T>(shape); });
  }

  const UGnetConfig& config() const { return config_; }

  std::vector<std::pair<std::string, Tensor<T>>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& parameters() const { return params_; }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.second.size();
    return n;
  }

  const Tensor<T>& param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ugnet: no parameter '" + name + "'");
    return params_[it->second].second;
  }
  Tensor<T>& param(const std::string& name) {
    return const_cast<Tensor<T>&>(static_cast<const UGnet&>(*this).param(name));
  }

  void zero_grad() {
    for (auto& p : params_) p.second.zero_grad();
  }

  Tensor<T> predict_noise(const Tensor<T>& x_n, const Tensor<T>& condition, std::span<const int> steps,
                          const Graph& graph) const override {
    return forward(x_n, condition, steps, graph);
  }

  /// x_n, condition: [B, F, V, T]; returns the noise estimate [B, F, V, T].
  Tensor<T> forward(const Tensor<T>& x_n, const Tensor<T>& condition, std::span<const int> steps,
                    const Graph& graph) const {
    const Shape expected{x_n.rank() == 4 ? x_n.dim(0) : 0, config_.features, config_.nodes, config_.length};
    if (x_n.shape() != expected) throw_shape_error("ugnet input x_n", "expected [B,F,V,T]", x_n.shape(), expected);
    if (condition.shape() != x_n.shape()) {
      throw_shape_error("ugnet input condition", "differs from x_n", condition.shape(), x_n.shape());
    }
    if (steps.size() != x_n.dim(0)) {
      throw std::invalid_argument("ugnet: " + std::to_string(steps.size()) + " steps for batch of " +
                                  std::to_string(x_n.dim(0)));
    }
    if (graph.num_nodes() != config_.nodes) {
      throw_shape_error("ugnet graph", "node count differs", Shape{graph.num_nodes()}, Shape{config_.nodes});
    }
    const std::size_t batch = x_n.dim(0);
    const std::size_t total = config_.padded_length();
    const std::size_t pad = total - 2 * config_.length;

    std::vector<Tensor<T>> parts;
    if (pad > 0) parts.emplace_back(Shape{batch, config_.features, config_.nodes, pad});
    parts.push_back(condition);
    parts.push_back(x_n);
    Tensor<T> x = concat<T>(std::span<const Tensor<T>>(parts), 3);

    std::vector<T> emb_values;
    for (int n : steps) {
      auto e = noise_embedding(n, config_.embed_dim);
      emb_values.insert(emb_values.end(), e.begin(), e.end());
    }
    const Tensor<T> emb(Shape{batch, config_.embed_dim}, std::move(emb_values));
    std::optional<Tensor<T>> aggregation;
    if (config_.use_gcn) aggregation = graph.normalized_tensor<T>();
    const Tensor<T>* agg = aggregation ? &*aggregation : nullptr;

    Tensor<T> h = pointwise(x, "input");
    std::vector<Tensor<T>> skips;
    for (std::size_t i = 0; i < config_.levels(); ++i) {
      if (i > 0 && config_.channel_growth) h = pointwise(h, level_name("down", i) + ".expand");
      h = block(level_name("down", i), h, emb, agg);
      if (config_.u_structure) {
        skips.push_back(h);
        h = subsample_time(h, 2);
      }
    }
    for (std::size_t i = config_.levels(); i-- > 0;) {
      const std::string name = level_name("up", i);
      if (config_.u_structure) {
        h = repeat_time(h, 2);
        h = add_channel_bias(conv1d(h, param(name + ".smooth_w"), config_.kernel - 1), param(name + ".smooth_b"));
        h = add(h, skips[i]);
      }
      h = block(name, h, emb, agg);
    }
    Tensor<T> out = pointwise(h, "output");
    return slice(out, 3, total - config_.length, config_.length);
  }

 private:
  struct InitTag {};

  template <typename Init>
  UGnet(UGnetConfig config, InitTag, Init init) : config_(std::move(config)) {
    config_.validate();
    build(init);
  }

  static std::string level_name(const char* kind, std::size_t level) {
    return std::string(kind) + std::to_string(level);
  }

  template <typename Init>
  void build(Init&& init) {
    auto add_param = [&](const std::string& name, Shape shape, std::size_t fan_in) {
      Tensor<T> t = init(name, shape, fan_in);
      t.set_requires_grad();
      index_[name] = params_.size();
      params_.emplace_back(name, std::move(t));
    };
    const std::size_t f = config_.features, k = config_.kernel, d = config_.embed_dim;
    const std::size_t c0 = config_.level_channels(0);
    add_param("input.w", {c0, f, 1}, f);
    add_param("input.b", {c0}, f);
    auto add_block = [&](const std::string& name, std::size_t c, std::size_t len) {
      add_param(name + ".emb_w", {d, c}, d);
      add_param(name + ".emb_b", {c}, d);
      const std::size_t tk = config_.use_tcn ? k : 1;
      add_param(name + ".tcn_p_w", {c, c, tk}, c * tk);
      add_param(name + ".tcn_p_b", {c}, c * tk);
      if (config_.use_tcn) {
        add_param(name + ".tcn_q_w", {c, c, tk}, c * tk);
        add_param(name + ".tcn_q_b", {c}, c * tk);
      }
      add_param(name + ".gcn_w", {c * len, c * len}, c * len);
    };
    for (std::size_t i = 0; i < config_.levels(); ++i) {
      const std::size_t c = config_.level_channels(i);
      if (i > 0 && config_.channel_growth) {
        const std::size_t prev = config_.level_channels(i - 1);
        add_param(level_name("down", i) + ".expand.w", {c, prev, 1}, prev);
        add_param(level_name("down", i) + ".expand.b", {c}, prev);
      }
      add_block(level_name("down", i), c, config_.level_length(i));
    }
    for (std::size_t i = config_.levels(); i-- > 0;) {
      const std::size_t c = config_.level_channels(i);
      const std::string name = level_name("up", i);
      if (config_.u_structure) {
        const std::size_t in = config_.level_channels(std::min(i + 1, config_.levels() - 1));
        add_param(name + ".smooth_w", {c, in, k}, in * k);
        add_param(name + ".smooth_b", {c}, in * k);
      }
      add_block(name, c, config_.level_length(i));
    }
    add_param("output.w", {f, c0, 1}, c0);
    add_param("output.b", {f}, c0);
  }

  Tensor<T> pointwise(const Tensor<T>& h, const std::string& prefix) const {
    return add_channel_bias(conv1d(h, param(prefix + ".w"), 0), param(prefix + ".b"));
  }

  Tensor<T> block(const std::string& name, const Tensor<T>& h, const Tensor<T>& emb, const Tensor<T>* agg) const {
    const std::size_t batch = h.dim(0), c = h.dim(1);
    const Tensor<T>& emb_b = param(name + ".emb_b");
    auto e = add(matmul(emb, param(name + ".emb_w")), broadcast_to(reshape(emb_b, Shape{1, c}), Shape{batch, c}));
    auto h_in = add(h, broadcast_to(reshape(e, Shape{batch, c, 1, 1}), h.shape()));
    Tensor<T> temporal = config_.use_tcn
                             ? gated_tcn(h_in, param(name + ".tcn_p_w"), param(name + ".tcn_p_b"),
                                         param(name + ".tcn_q_w"), param(name + ".tcn_q_b"))
                             : add_channel_bias(conv1d(h_in, param(name + ".tcn_p_w"), 0), param(name + ".tcn_p_b"));
    try {
      return add(h_in, spatial_conv(temporal, agg, param(name + ".gcn_w"), config_.gcn_activation));
    } catch (const ShapeError& e) {
      throw ShapeError("ugnet block " + name + ": " + e.what());
    }
  }

  UGnetConfig config_;
  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Checkpoint directory: manifest.txt ("key = value" lines for the config and
/// caller metadata, then "tensor <name> <file>" lines) plus one serialized
/// tensor per parameter.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const UGnet<T>& model,
                     const std::map<std::string, std::string>& metadata = {});

struct CheckpointManifest {
  UGnetConfig config;
  std::map<std::string, std::string> metadata;  // non-ugnet keys
  std::vector<std::pair<std::string, std::string>> tensors;
};

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir);
void write_checkpoint_manifest(const std::filesystem::path& dir, const CheckpointManifest& manifest);

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const UGnet<T>& model,
                     const std::map<std::string, std::string>& metadata) {
  std::filesystem::create_directories(dir);
  CheckpointManifest manifest{model.config(), metadata, {}};
  for (const auto& [name, tensor] : model.parameters()) {
    save_tensor(dir / name, tensor);
    manifest.tensors.emplace_back(name, name);
  }
  write_checkpoint_manifest(dir, manifest);
}

template <typename T>
UGnet<T> load_checkpoint(const std::filesystem::path& dir, CheckpointManifest* manifest_out = nullptr) {
  CheckpointManifest manifest = read_checkpoint_manifest(dir);
  UGnet<T> model = UGnet<T>::zeros(manifest.config);
  std::map<std::string, std::string> files(manifest.tensors.begin(), manifest.tensors.end());
  for (auto& [name, tensor] : model.parameters()) {
    auto it = files.find(name);
    if (it == files.end()) throw std::runtime_error(dir.string() + ": checkpoint lacks tensor '" + name + "'");
    Tensor<T> loaded = load_tensor<T>(dir / it->second);
    if (loaded.shape() != tensor.shape()) {
      throw_shape_error("load_checkpoint " + name, "manifest config disagrees with file", tensor.shape(), loaded.shape());
    }
    std::copy(loaded.data().begin(), loaded.data().end(), tensor.mutable_data().begin());
  }
  if (files.size() != model.parameters().size()) {
    throw std::runtime_error(dir.string() + ": checkpoint has " + std::to_string(files.size()) +
                             " tensors, model expects " + std::to_string(model.parameters().size()));
  }
  if (manifest_out) *manifest_out = std::move(manifest);
  return model;
}

}  // namespace diffstg
