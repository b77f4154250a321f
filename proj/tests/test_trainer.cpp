#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "diffstg/trainer.hpp"
#include "support.hpp"

using namespace diffstg;

namespace {

std::vector<STGWindow> pattern_windows(std::size_t count) {
  auto graph = std::make_shared<const Graph>(Graph::ring(3));
  std::mt19937_64 gen(1);
  std::vector<STGWindow> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto w = testing::make_window(graph, 4, 4, gen, i);
    for (std::size_t v = 0; v < 3; ++v) {
      for (std::size_t t = 0; t < 8; ++t) w.x_all[v * 8 + t] = 0.8 * std::sin(0.7 * t + 2.0 * v);
    }
    out.push_back(std::move(w));
  }
  return out;
}

UGnetConfig toy_net() {
  UGnetConfig c;
  c.nodes = 3;
  c.length = 8;
  c.channels = 8;
  c.embed_dim = 16;
  c.depth = 1;
  return c;
}

TrainConfig toy_train(std::uint64_t seed) {
  TrainConfig t;
  t.seed = seed;
  t.steps = 20;
  t.beta_N = 0.4;
  t.max_epochs = 6;
  t.steps_per_epoch = 40;
  t.lr = 0.005;
  t.val_windows = 4;
  t.val_samples = 4;
  t.patience = 100;
  return t;
}

double ensemble_spread(const UGnet<double>& net, const STGWindow& w, const NoiseSchedule& schedule) {
  EnsembleOptions opt;
  opt.samples = 16;
  opt.seed = 5;
  auto e = ensemble_sample<double>(net, w, schedule, opt);
  const std::size_t n = e.samples[0].size();
  double total = 0;
  for (std::size_t j = 0; j < n; ++j) {
    double m = 0, q = 0;
    for (const auto& s : e.samples) m += s.data()[j] / e.samples.size();
    for (const auto& s : e.samples) q += (s.data()[j] - m) * (s.data()[j] - m) / (e.samples.size() - 1);
    total += std::sqrt(q) / n;
  }
  return total;
}

}  // namespace

TEST_CASE("learning rate halves every five epochs") {
  TrainConfig c;
  CHECK(learning_rate(c, 1) == doctest::Approx(0.002));
  CHECK(learning_rate(c, 5) == doctest::Approx(0.002));
  CHECK(learning_rate(c, 6) == doctest::Approx(0.001));
  CHECK(learning_rate(c, 11) == doctest::Approx(0.0005));
  CHECK_THROWS(learning_rate(c, 0));
}

TEST_CASE("adam update rules") {
  std::vector<Tensor<double>> params{Tensor<double>({3}, {1.0, -2.0, 0.5})};
  AdamState state;
  SUBCASE("zero gradient keeps parameters but advances the step") {
    std::vector<std::vector<double>> g{{0.0, 0.0, 0.0}};
    adam_step<double>(params, g, state, 0.1);
    CHECK(state.step == 1);
    CHECK(params[0].data()[0] == 1.0);
    CHECK(params[0].data()[1] == -2.0);
  }
  SUBCASE("first step moves each entry by lr against the gradient sign") {
    std::vector<std::vector<double>> g{{0.3, -5.0, 1e-3}};
    adam_step<double>(params, g, state, 0.01);
    CHECK(params[0].data()[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-9));
    CHECK(params[0].data()[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-9));
    CHECK(std::abs(params[0].data()[2] - (0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8))) < 1e-12);
  }
  SUBCASE("moments decay once gradients vanish") {
    std::vector<std::vector<double>> g{{1.0, 1.0, 1.0}}, zero{{0.0, 0.0, 0.0}};
    adam_step<double>(params, g, state, 0.01);
    const double m1 = state.m[0][0], v1 = state.v[0][0];
    adam_step<double>(params, zero, state, 0.01);
    CHECK(state.m[0][0] == doctest::Approx(0.9 * m1));
    CHECK(state.v[0][0] == doctest::Approx(0.999 * v1));
  }
  SUBCASE("size mismatches are rejected") {
    std::vector<std::vector<double>> g{{1.0, 1.0}};
    CHECK_THROWS_AS(adam_step<double>(params, g, state, 0.01), ShapeError);
    std::vector<std::vector<double>> two{{1.0, 1.0, 1.0}, {1.0}};
    CHECK_THROWS(adam_step<double>(params, two, state, 0.01));
  }
}

TEST_CASE("adam matches a direct implementation over several steps") {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Tensor<double>> params{Tensor<double>({4}, {0.1, 0.2, -0.3, 0.4})};
  std::vector<double> w(params[0].data().begin(), params[0].data().end()), m(4, 0), v(4, 0);
  AdamState state;
  for (int t = 1; t <= 20; ++t) {
    std::vector<std::vector<double>> g{{normal(gen), normal(gen), normal(gen), normal(gen)}};
    adam_step<double>(params, g, state, 0.003);
    for (std::size_t j = 0; j < 4; ++j) {
      m[j] = 0.9 * m[j] + 0.1 * g[0][j];
      v[j] = 0.999 * v[j] + 0.001 * g[0][j] * g[0][j];
      const double mh = m[j] / (1 - std::pow(0.9, t)), vh = v[j] / (1 - std::pow(0.999, t));
      w[j] -= 0.003 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (std::size_t j = 0; j < 4; ++j) CHECK(params[0].data()[j] == doctest::Approx(w[j]).epsilon(1e-12));
}

TEST_CASE("gradient clipping rescales to the global norm") {
  std::vector<Tensor<double>> params{Tensor<double>({2}), Tensor<double>({1})};
  params[0].mutable_grad()[0] = 3.0;
  params[0].mutable_grad()[1] = 0.0;
  params[1].mutable_grad()[0] = 4.0;
  CHECK(clip_grad_norm<double>(params, 10.0) == doctest::Approx(5.0));
  CHECK(params[0].grad()[0] == 3.0);
  CHECK(clip_grad_norm<double>(params, 1.0) == doctest::Approx(5.0));
  CHECK(params[0].grad()[0] == doctest::Approx(0.6));
  CHECK(params[1].grad()[0] == doctest::Approx(0.8));
}

TEST_CASE("training on a fixed pattern reduces loss and ensemble spread") {
  auto windows = pattern_windows(16);
  std::span<const STGWindow> all(windows);
  UGnet<double> net(toy_net(), 3);
  UGnet<double> untrained(toy_net(), 3);
  auto cfg = toy_train(11);
  const auto dir = std::filesystem::temp_directory_path() / "diffstg_trainer_test";
  std::filesystem::remove_all(dir);
  auto result = train<double>(net, all.subspan(0, 12), all.subspan(12), cfg, dir);

  REQUIRE(result.log.size() == 6);
  MESSAGE("loss " << result.log.front().train_loss << " -> " << result.log.back().train_loss);
  CHECK(result.log.back().train_loss < result.log.front().train_loss);
  CHECK(result.best_epoch >= 1);
  for (const auto& [name, p] : net.parameters()) CHECK_FALSE(p.requires_grad());

  const auto schedule = cfg.make_noise_schedule();
  const double trained = ensemble_spread(net, windows[13], schedule);
  const double before = ensemble_spread(untrained, windows[13], schedule);
  MESSAGE("ensemble std " << before << " -> " << trained);
  CHECK(trained < before);

  std::ifstream log(dir / "train_log.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "epoch,train_loss,val_crps,lr,wall_seconds,clipped_steps");
  std::size_t rows = 0;
  for (std::string line; std::getline(log, line);) ++rows;
  CHECK(rows == 6);
  auto manifest = read_checkpoint_manifest(dir / "checkpoint");
  CHECK(manifest.metadata.at("train.best_epoch") == std::to_string(result.best_epoch));
  std::filesystem::remove_all(dir);
}

TEST_CASE("training is reproducible for a fixed seed") {
  auto windows = pattern_windows(10);
  std::span<const STGWindow> all(windows);
  auto cfg = toy_train(21);
  cfg.max_epochs = 2;
  cfg.steps_per_epoch = 10;
  UGnet<double> a(toy_net(), 7), b(toy_net(), 7);
  auto ra = train<double>(a, all.subspan(0, 8), all.subspan(8), cfg);
  auto rb = train<double>(b, all.subspan(0, 8), all.subspan(8), cfg);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(ra.log[e].train_loss == rb.log[e].train_loss);
    CHECK(ra.log[e].val_crps == rb.log[e].val_crps);
  }
  CHECK(a.parameters()[0].second.data()[0] == b.parameters()[0].second.data()[0]);
}

TEST_CASE("non-finite loss aborts with its location") {
  auto windows = pattern_windows(6);
  std::span<const STGWindow> all(windows);
  UGnet<double> net(toy_net(), 1);
  for (auto& [name, p] : net.parameters()) p.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  auto cfg = toy_train(1);
  try {
    train<double>(net, all.subspan(0, 4), all.subspan(4), cfg);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("non-finite loss at epoch 1, step 1") != std::string::npos);
  }
}

TEST_CASE("invalid training configs") {
  auto windows = pattern_windows(4);
  std::span<const STGWindow> all(windows);
  UGnet<double> net(toy_net(), 1);
  auto cfg = toy_train(1);
  cfg.batch_size = 0;
  CHECK_THROWS(train<double>(net, all.subspan(0, 2), all.subspan(2), cfg));
  cfg = toy_train(1);
  CHECK_THROWS(train<double>(net, all.subspan(0, 0), all.subspan(2), cfg));
}
