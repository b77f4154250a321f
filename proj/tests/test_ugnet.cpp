#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <set>

#include "diffstg/ugnet.hpp"
#include "support.hpp"

using namespace diffstg;
using diffstg::testing::grad_check;
using diffstg::testing::make_window;
using diffstg::testing::random_tensor;
using TD = Tensor<double>;

namespace {

UGnetConfig tiny(std::size_t nodes = 4, std::size_t length = 8, std::size_t channels = 8) {
  UGnetConfig c;
  c.nodes = nodes;
  c.length = length;
  c.channels = channels;
  c.embed_dim = 16;
  return c;
}

std::vector<double> values(const TD& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("noise embedding properties") {
  for (int n : {1, 100, 1000}) {
    auto e = noise_embedding(n, 64);
    REQUIRE(e.size() == 64);
    for (double x : e) CHECK(std::abs(x) <= 1.0);
    for (std::size_t d = 0; d < 32; ++d) CHECK(e[2 * d] * e[2 * d] + e[2 * d + 1] * e[2 * d + 1] == doctest::Approx(1.0));
  }
  std::vector<std::vector<double>> all;
  for (int n = 1; n <= 200; ++n) all.push_back(noise_embedding(n, 64));
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      double diff = 0;
      for (std::size_t d = 0; d < 64; ++d) diff = std::max(diff, std::abs(all[i][d] - all[j][d]));
      CHECK(diff > 1e-9);
    }
  }
  // first pair has frequency 10000^{-2/D}
  auto e = noise_embedding(3, 8);
  CHECK(e[0] == doctest::Approx(std::cos(3 * std::pow(10000.0, -2.0 / 8))));
  CHECK(e[1] == doctest::Approx(std::sin(3 * std::pow(10000.0, -2.0 / 8))));
  CHECK_THROWS(noise_embedding(1, 7));
  CHECK_THROWS(noise_embedding(0, 8));
}

TEST_CASE("gated TCN: half gate, causality and sliding-window oracle") {
  std::mt19937_64 rng(1);
  auto h = random_tensor({1, 2, 3, 6}, rng);
  auto p = random_tensor({2, 2, 3}, rng), pb = random_tensor({2}, rng);
  auto q = random_tensor({2, 2, 3}, rng), qb = random_tensor({2}, rng);

  auto half = gated_tcn(h, p, pb, TD({2, 2, 3}), TD({2}));
  auto only_p = add_channel_bias(conv1d(h, p, 2), pb);
  for (std::size_t i = 0; i < half.size(); ++i) CHECK(half.data()[i] == doctest::Approx(0.5 * only_p.data()[i]));

  auto out = gated_tcn(h, p, pb, q, qb);
  auto conv_at = [&](const TD& w, const TD& b, std::size_t o, std::size_t v, std::size_t t) {
    double acc = b.data()[o];
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t k = 0; k < 3; ++k) {
        const long src = static_cast<long>(t + k) - 2;
        if (src >= 0) acc += w.data()[(o * 2 + c) * 3 + k] * h.data()[(c * 3 + v) * 6 + static_cast<std::size_t>(src)];
      }
    }
    return acc;
  };
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t v = 0; v < 3; ++v) {
      for (std::size_t t = 0; t < 6; ++t) {
        const double expect = conv_at(p, pb, o, v, t) / (1.0 + std::exp(-conv_at(q, qb, o, v, t)));
        CHECK(out.data()[(o * 3 + v) * 6 + t] == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }

  auto impulse = h.clone();
  impulse.mutable_data()[3] += 5.0;  // channel 0, node 0, t = 3
  auto moved = gated_tcn(impulse, p, pb, q, qb);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t t = 0; t < 3; ++t) CHECK(moved.data()[o * 18 + t] == out.data()[o * 18 + t]);
    CHECK(moved.data()[o * 18 + 3] != out.data()[o * 18 + 3]);
  }
}

TEST_CASE("forward shape contract") {
  for (std::size_t v : {4u, 34u}) {
    for (std::size_t c : {8u, 32u}) {
      auto cfg = tiny(v, 24, c);
      cfg.embed_dim = 64;
      UGnet<float> net(cfg, 3);
      std::mt19937_64 rng(2);
      Graph g = Graph::ring(v);
      Tensor<float> x({2, 1, v, 24}, 0.5f), cond({2, 1, v, 24}, -0.5f);
      const int steps[] = {1, 7};
      CHECK(net.forward(x, cond, steps, g).shape() == x.shape());
    }
  }
  UGnet<double> net(tiny(), 1);
  const int one[] = {1};
  CHECK_THROWS_AS(net.forward(TD({1, 1, 5, 8}), TD({1, 1, 5, 8}), one, Graph::ring(5)), ShapeError);
  CHECK_THROWS_AS(net.forward(TD({1, 1, 4, 8}), TD({1, 1, 4, 7}), one, Graph::ring(4)), ShapeError);
}

TEST_CASE("all-zero parameters give all-zero output") {
  auto net = UGnet<double>::zeros(tiny());
  std::mt19937_64 rng(4);
  auto x = random_tensor({2, 1, 4, 8}, rng), c = random_tensor({2, 1, 4, 8}, rng);
  const int steps[] = {3, 9};
  auto y = net.forward(x, c, steps, Graph::ring(4));
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("denoising loss gradient matches finite differences") {
  UGnet<double> net(tiny(), 21);
  auto sched = make_quadratic_schedule(20, 1e-4, 0.3);
  std::mt19937_64 gen(5);
  auto graph = std::make_shared<const Graph>(Graph::ring(4));
  std::vector<STGWindow> windows{make_window(graph, 4, 4, gen, 0), make_window(graph, 4, 4, gen, 1)};
  std::vector<const STGWindow*> ptrs{&windows[0], &windows[1]};
  std::vector<TD> params;
  for (auto& p : net.parameters()) params.push_back(p.second);
  auto f = [&](const std::vector<TD>&) {
    Rng rng(6);
    return denoising_loss<double>(net, std::span<const STGWindow* const>(ptrs), sched, rng);
  };
  CHECK(grad_check(params, f, 1e-4, 1e-3, 24) <= 1e-3);
}

TEST_CASE("ablation variants produce correct shapes and gradients") {
  auto sched = make_quadratic_schedule(20, 1e-4, 0.3);
  std::mt19937_64 gen(7);
  auto graph = std::make_shared<const Graph>(Graph::ring(4));
  auto w = make_window(graph, 4, 4, gen);
  for (int variant = 0; variant < 5; ++variant) {
    auto cfg = tiny();
    if (variant == 0) cfg.use_gcn = false;
    if (variant == 1) cfg.use_tcn = false;
    if (variant == 2) cfg.u_structure = false;
    if (variant == 3) cfg.channel_growth = true;
    if (variant == 4) cfg.gcn_activation = GcnActivation::relu;
    UGnet<double> net(cfg, 8);
    std::vector<TD> params;
    for (auto& p : net.parameters()) params.push_back(p.second);
    auto f = [&](const std::vector<TD>&) {
      Rng rng(9);
      return denoising_loss<double>(net, w, sched, rng);
    };
    CAPTURE(variant);
    CHECK(grad_check(params, f, 1e-4, 1e-3, 6) <= 1e-3);
  }
}

TEST_CASE("node permutation permutes the output") {
  UGnet<double> net(tiny(5), 10);
  std::mt19937_64 rng(11);
  std::vector<double> adj(25, 0.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) adj[i * 5 + j] = adj[j * 5 + i] = u(rng) < 0.5 ? u(rng) : 0.0;
  }
  const std::size_t perm[] = {3, 0, 4, 1, 2};  // new node i is old node perm[i]
  std::vector<double> adj_p(25);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) adj_p[i * 5 + j] = adj[perm[i] * 5 + perm[j]];
  }
  auto x = random_tensor({1, 1, 5, 8}, rng), c = random_tensor({1, 1, 5, 8}, rng);
  auto permute_nodes = [&](const TD& t) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t s = 0; s < 8; ++s) out[i * 8 + s] = t.data()[perm[i] * 8 + s];
    }
    return TD(t.shape(), out);
  };
  const int steps[] = {4};
  auto y = net.forward(x, c, steps, Graph(5, adj));
  auto y_p = net.forward(permute_nodes(x), permute_nodes(c), steps, Graph(5, adj_p));
  auto expect = permute_nodes(y);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y_p.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-12));
}

TEST_CASE("output depends on the condition and on the step") {
  UGnet<double> net(tiny(), 12);
  std::mt19937_64 rng(13);
  auto x = random_tensor({1, 1, 4, 8}, rng), c = random_tensor({1, 1, 4, 8}, rng), c2 = random_tensor({1, 1, 4, 8}, rng);
  const int s1[] = {2}, s2[] = {15};
  auto a = values(net.forward(x, c, s1, Graph::ring(4)));
  CHECK(a != values(net.forward(x, c2, s1, Graph::ring(4))));
  CHECK(a != values(net.forward(x, c, s2, Graph::ring(4))));
}

TEST_CASE("config entries and checkpoints round-trip") {
  auto cfg = tiny(6, 24, 8);
  cfg.channel_growth = true;
  cfg.gcn_activation = GcnActivation::relu;
  cfg.use_tcn = false;
  auto back = UGnetConfig::from_entries(cfg.to_entries());
  CHECK(back.to_entries() == cfg.to_entries());
  CHECK_THROWS(UGnetConfig::from_entries({{"ugnet.C", "eight"}}));

  UGnet<float> net(cfg, 14);
  const auto dir = std::filesystem::temp_directory_path() / "diffstg_ckpt_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, net, {{"diffusion.N", "50"}});
  CheckpointManifest manifest;
  auto loaded = load_checkpoint<float>(dir, &manifest);
  CHECK(manifest.metadata.at("diffusion.N") == "50");
  CHECK(loaded.parameter_count() == net.parameter_count());
  Tensor<float> x({1, 1, 6, 24}, 0.3f), c({1, 1, 6, 24}, -0.1f);
  const int steps[] = {5};
  auto a = net.forward(x, c, steps, Graph::ring(6)), b = loaded.forward(x, c, steps, Graph::ring(6));
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  std::filesystem::remove(dir / "output.w.bin");
  CHECK_THROWS(load_checkpoint<float>(dir));
  std::filesystem::remove_all(dir);
}

TEST_CASE("invalid configs are rejected") {
  auto cfg = tiny();
  cfg.embed_dim = 7;
  CHECK_THROWS(UGnet<double>(cfg, 1));
  cfg = tiny();
  cfg.nodes = 0;
  CHECK_THROWS(UGnet<double>(cfg, 1));
}
