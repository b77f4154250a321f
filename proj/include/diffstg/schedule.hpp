#pragma once

#include <string_view>
#include <vector>

namespace diffstg {

enum class ScheduleKind { quadratic, linear };

ScheduleKind parse_schedule_kind(std::string_view name);

/// Variance schedule beta_1..beta_N and its derived products.
///
/// Steps are 1-based. alpha_bar(0) is defined as 1, so beta_tilde(1) == beta(1).
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int n) const;
  double alpha_hat(int n) const;  // 1 - beta_n
  double alpha_bar(int n) const;  // prod_{i<=n} (1 - beta_i); n = 0 gives 1
  /// Variance of q(x_{n-1} | x_n, x_0): (1 - alpha_bar(n-1)) / (1 - alpha_bar(n)) * beta_n.
  double beta_tilde(int n) const;

  const std::vector<double>& betas() const { return beta_; }

 private:
  void check_step(int n, int lowest) const;

  std::vector<double> beta_;
  std::vector<double> alpha_bar_;  // index n holds alpha_bar(n), alpha_bar_[0] = 1
  std::vector<double> beta_tilde_;
};

/// beta_n = ((N-n)/(N-1) sqrt(beta_1) + (n-1)/(N-1) sqrt(beta_N))^2
NoiseSchedule make_quadratic_schedule(int steps, double beta_1, double beta_N);
/// beta_n linear between the endpoints; ablation only.
NoiseSchedule make_linear_schedule(int steps, double beta_1, double beta_N);
NoiseSchedule make_schedule(ScheduleKind kind, int steps, double beta_1, double beta_N);

double alpha_bar(const NoiseSchedule& schedule, int n);

}  // namespace diffstg
