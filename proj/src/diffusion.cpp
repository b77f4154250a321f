#include "diffstg/diffusion.hpp"

namespace diffstg {

SamplerMode parse_sampler_mode(std::string_view name) {
  if (name == "ddpm") return SamplerMode::ddpm;
  if (name == "ddim") return SamplerMode::ddim;
  throw std::invalid_argument("unknown sampler mode '" + std::string(name) + "' (ddpm|ddim)");
}

std::string_view to_string(SamplerMode mode) { return mode == SamplerMode::ddim ? "ddim" : "ddpm"; }

std::vector<int> uniform_subset(int steps, int subset_size) {
  if (subset_size < 1 || subset_size > steps) {
    throw std::invalid_argument("subset size M=" + std::to_string(subset_size) + " outside [1, N=" +
                                std::to_string(steps) + "]");
  }
  std::vector<int> tau(subset_size);
  for (int m = 1; m <= subset_size; ++m) {
    tau[m - 1] = static_cast<int>((static_cast<long long>(m) * steps) / subset_size);
  }
  return tau;
}

void validate_subset(std::span<const int> tau, int steps) {
  if (tau.empty()) throw std::invalid_argument("step subset is empty");
  for (std::size_t i = 0; i < tau.size(); ++i) {
    if (tau[i] < 1 || tau[i] > steps) {
      throw std::invalid_argument("step subset entry " + std::to_string(tau[i]) + " outside [1, " +
                                  std::to_string(steps) + "]");
    }
    if (i > 0 && tau[i] <= tau[i - 1]) throw std::invalid_argument("step subset must be strictly increasing");
  }
  if (tau.back() != steps) throw std::invalid_argument("step subset must end at N=" + std::to_string(steps));
}

}  // namespace diffstg
