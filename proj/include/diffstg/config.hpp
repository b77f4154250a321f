#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diffstg/data.hpp"
#include "diffstg/trainer.hpp"

namespace diffstg {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat `section.key = value` settings over a fixed key registry.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<std::string>& known_keys();
  static bool is_known(const std::string& key);

  /// Parses a config file; '#' starts a comment. Unknown keys are rejected.
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  /// Applies a named preset ("tiny", "default").
  void apply_profile(const std::string& name);

  const std::string& get(const std::string& key) const;
  bool is_set(const std::string& key) const { return !get(key).empty(); }
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Writes every key in registry order; `load_file` reproduces this config.
  void write(const std::filesystem::path& path) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  UGnetConfig ugnet(std::size_t nodes) const;
  TrainConfig train() const;
  SamplerConfig sampler() const;
  EnsembleOptions ensemble() const;
  SyntheticSpec synthetic() const;
  NoiseSchedule schedule() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace diffstg
