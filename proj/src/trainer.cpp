#include "diffstg/trainer.hpp"

#include <fmt/format.h>

namespace diffstg {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
  };
  require(batch_size > 0, "batch_size must be positive");
  require(lr > 0.0 && std::isfinite(lr), "lr must be positive");
  require(lr_halving_every > 0, "lr_halving_every must be positive");
  require(patience > 0, "patience must be positive");
  require(max_epochs > 0, "max_epochs must be positive");
  require(steps > 0, "diffusion steps must be positive");
  require(val_samples > 0, "validation S must be positive");
  require(grad_clip >= 0.0, "grad_clip must be non-negative");
  require(time_budget_seconds >= 0.0, "time budget must be non-negative");
}

double learning_rate(const TrainConfig& config, std::size_t epoch) {
  if (epoch == 0) throw std::invalid_argument("learning_rate: epochs are counted from 1");
  const auto halvings = static_cast<double>((epoch - 1) / config.lr_halving_every);
  return config.lr * std::pow(0.5, halvings);
}

void write_train_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,val_crps,lr,wall_seconds,clipped_steps\n";
  for (const auto& e : log) {
    out << fmt::format("{},{:.9g},{:.9g},{:.9g},{:.3f},{}\n", e.epoch, e.train_loss, e.val_crps, e.lr, e.wall_seconds,
                       e.clipped_steps);
  }
}

std::vector<const STGWindow*> spread_windows(std::span<const STGWindow> windows, std::size_t count) {
  std::vector<const STGWindow*> out;
  if (count == 0 || count >= windows.size()) {
    for (const auto& w : windows) out.push_back(&w);
    return out;
  }
  for (std::size_t i = 0; i < count; ++i) out.push_back(&windows[i * windows.size() / count]);
  return out;
}

}  // namespace diffstg
