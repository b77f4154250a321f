#include "diffstg/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diffstg {

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "quadratic") return ScheduleKind::quadratic;
  if (name == "linear") return ScheduleKind::linear;
  throw std::invalid_argument("unknown schedule '" + std::string(name) + "' (quadratic|linear)");
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.empty()) throw std::invalid_argument("noise schedule needs at least one step");
  alpha_bar_.assign(beta_.size() + 1, 1.0);
  beta_tilde_.resize(beta_.size());
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    const double b = beta_[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument("beta_" + std::to_string(i + 1) + " = " + std::to_string(b) +
                                  " outside (0, 1)");
    }
    if (i > 0 && b < beta_[i - 1]) {
      throw std::invalid_argument("beta must be non-decreasing (step " + std::to_string(i + 1) + ")");
    }
    alpha_bar_[i + 1] = alpha_bar_[i] * (1.0 - b);
    // the ratio is 0 at n = 1; the alpha_bar(0) = 1 convention fixes it to beta_1
    beta_tilde_[i] = i == 0 ? b : (1.0 - alpha_bar_[i]) / (1.0 - alpha_bar_[i + 1]) * b;
  }
}

void NoiseSchedule::check_step(int n, int lowest) const {
  if (n < lowest || n > steps()) {
    throw std::out_of_range("diffusion step " + std::to_string(n) + " outside [" +
                            std::to_string(lowest) + ", " + std::to_string(steps()) + "]");
  }
}

double NoiseSchedule::beta(int n) const {
  check_step(n, 1);
  return beta_[n - 1];
}

double NoiseSchedule::alpha_hat(int n) const { return 1.0 - beta(n); }

double NoiseSchedule::alpha_bar(int n) const {
  check_step(n, 0);
  return alpha_bar_[n];
}

double NoiseSchedule::beta_tilde(int n) const {
  check_step(n, 1);
  return beta_tilde_[n - 1];
}

namespace {

void check_bounds(int steps, double beta_1, double beta_N) {
  if (steps < 2) throw std::invalid_argument("schedule needs N >= 2, got " + std::to_string(steps));
  if (!(beta_1 > 0.0 && beta_1 <= beta_N && beta_N < 1.0)) {
    throw std::invalid_argument("schedule bounds must satisfy 0 < beta_1 <= beta_N < 1 (got " +
                                std::to_string(beta_1) + ", " + std::to_string(beta_N) + ")");
  }
}

}  // namespace

NoiseSchedule make_quadratic_schedule(int steps, double beta_1, double beta_N) {
  check_bounds(steps, beta_1, beta_N);
  const double lo = std::sqrt(beta_1), hi = std::sqrt(beta_N);
  const double span = static_cast<double>(steps - 1);
  std::vector<double> betas(steps);
  for (int n = 1; n <= steps; ++n) {
    const double r = (static_cast<double>(steps - n) / span) * lo +
                     (static_cast<double>(n - 1) / span) * hi;
    betas[n - 1] = r * r;
  }
  betas.front() = beta_1;
  betas.back() = beta_N;
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule make_linear_schedule(int steps, double beta_1, double beta_N) {
  check_bounds(steps, beta_1, beta_N);
  const double span = static_cast<double>(steps - 1);
  std::vector<double> betas(steps);
  for (int n = 1; n <= steps; ++n) {
    betas[n - 1] = (static_cast<double>(steps - n) / span) * beta_1 +
                   (static_cast<double>(n - 1) / span) * beta_N;
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule make_schedule(ScheduleKind kind, int steps, double beta_1, double beta_N) {
  return kind == ScheduleKind::linear ? make_linear_schedule(steps, beta_1, beta_N)
                                      : make_quadratic_schedule(steps, beta_1, beta_N);
}

double alpha_bar(const NoiseSchedule& schedule, int n) {
  if (n < 1) throw std::out_of_range("alpha_bar: step " + std::to_string(n) + " < 1");
  return schedule.alpha_bar(n);
}

}  // namespace diffstg
