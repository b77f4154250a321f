#include "diffstg/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace diffstg {
namespace {

const std::vector<std::pair<std::string, std::string>>& registry() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"run.seed", ""},
      {"data.signals", ""},
      {"data.adjacency", ""},
      {"data.T_h", "12"},
      {"data.T_p", "12"},
      {"data.stride", "1"},
      {"diffusion.N", "100"},
      {"diffusion.beta_1", "0.0001"},
      {"diffusion.beta_N", "0.1"},
      {"diffusion.schedule", "quadratic"},
      {"ugnet.C", "32"},
      {"ugnet.K", "3"},
      {"ugnet.depth", "2"},
      {"ugnet.D_embed", "64"},
      {"ugnet.channel_growth", "false"},
      {"ugnet.gcn_activation", "identity"},
      {"ugnet.gcn", "true"},
      {"ugnet.tcn", "true"},
      {"ugnet.u_structure", "true"},
      {"loss.future_only", "false"},
      {"train.batch_size", "8"},
      {"train.lr", "0.002"},
      {"train.lr_halving_every", "5"},
      {"train.patience", "10"},
      {"train.max_epochs", "100"},
      {"train.steps_per_epoch", "0"},
      {"train.grad_clip", "1"},
      {"train.val_S", "4"},
      {"train.val_windows", "32"},
      {"train.val_M", "0"},
      {"train.time_budget", "0"},
      {"sample.S", "8"},
      {"sample.k", "1"},
      {"sample.M", "0"},
      {"sample.mode", "ddpm"},
      {"sample.eta", "1"},
      {"sample.max_batch", "64"},
      {"synth.V", "8"},
      {"synth.rho", "0.9"},
      {"synth.lambda", "0.4"},
      {"synth.noise_std", "1"},
      {"synth.length", "20000"},
      {"synth.burn_in", "1000"},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [k, v] : registry()) values_[k] = v;
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& kv : registry()) out.push_back(kv.first);
    return out;
  }();
  return keys;
}

bool RunConfig::is_known(const std::string& key) {
  for (const auto& kv : registry()) {
    if (kv.first == key) return true;
  }
  return false;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_known(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

void RunConfig::apply_profile(const std::string& name) {
  if (name == "default") return;
  if (name != "tiny") throw ConfigError("unknown profile '" + name + "' (expected tiny or default)");
  set("diffusion.N", "50");
  set("diffusion.beta_N", "0.3");
  set("ugnet.C", "16");
  set("ugnet.D_embed", "32");
  set("train.max_epochs", "12");
  set("train.steps_per_epoch", "150");
  set("train.val_windows", "16");
  set("train.time_budget", "420");
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  }
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const std::string& s = get(key);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError(key + ": expected an integer, got '" + s + "'");
  }
  return v;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  const std::int64_t v = get_int(key);
  if (v < 0) throw ConfigError(key + ": must be non-negative, got " + std::to_string(v));
  return static_cast<std::size_t>(v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& s = get(key);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + s + "'");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + s + "'");
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& key : known_keys()) out << key << " = " << values_.at(key) << '\n';
}

UGnetConfig RunConfig::ugnet(std::size_t nodes) const {
  UGnetConfig c;
  c.features = 1;
  c.nodes = nodes;
  c.length = get_size("data.T_h") + get_size("data.T_p");
  c.channels = get_size("ugnet.C");
  c.kernel = get_size("ugnet.K");
  c.depth = get_size("ugnet.depth");
  c.embed_dim = get_size("ugnet.D_embed");
  c.channel_growth = get_bool("ugnet.channel_growth");
  try {
    c.gcn_activation = parse_gcn_activation(get("ugnet.gcn_activation"));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("ugnet.gcn_activation: ") + e.what());
  }
  c.use_gcn = get_bool("ugnet.gcn");
  c.use_tcn = get_bool("ugnet.tcn");
  c.u_structure = get_bool("ugnet.u_structure");
  return c;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.batch_size = get_size("train.batch_size");
  t.lr = get_double("train.lr");
  t.lr_halving_every = get_size("train.lr_halving_every");
  t.patience = get_size("train.patience");
  t.max_epochs = get_size("train.max_epochs");
  t.steps_per_epoch = get_size("train.steps_per_epoch");
  t.grad_clip = get_double("train.grad_clip");
  t.val_samples = get_size("train.val_S");
  t.val_windows = get_size("train.val_windows");
  t.time_budget_seconds = get_double("train.time_budget");
  t.steps = static_cast<int>(get_int("diffusion.N"));
  t.beta_1 = get_double("diffusion.beta_1");
  t.beta_N = get_double("diffusion.beta_N");
  t.schedule = parse_schedule_kind(get("diffusion.schedule"));
  t.loss.future_only = get_bool("loss.future_only");
  if (const auto m = get_int("train.val_M"); m > 0) {
    t.val_sampler.mode = SamplerMode::ddim;
    t.val_sampler.subset_size = static_cast<int>(m);
  }
  if (is_set("run.seed")) t.seed = get_u64("run.seed");
  return t;
}

SamplerConfig RunConfig::sampler() const {
  SamplerConfig s;
  s.mode = parse_sampler_mode(get("sample.mode"));
  s.subset_size = static_cast<int>(get_int("sample.M"));
  s.eta = get_double("sample.eta");
  if (s.subset_size < 0) throw ConfigError("sample.M must be non-negative");
  if (s.mode == SamplerMode::ddpm && s.subset_size != 0 && s.subset_size != get_int("diffusion.N")) {
    throw ConfigError("sample.M < N requires sample.mode = ddim");
  }
  return s;
}

EnsembleOptions RunConfig::ensemble() const {
  EnsembleOptions o;
  o.samples = get_size("sample.S");
  o.reuse = get_size("sample.k");
  o.sampler = sampler();
  o.max_batch = get_size("sample.max_batch");
  if (is_set("run.seed")) o.seed = get_u64("run.seed");
  return o;
}

SyntheticSpec RunConfig::synthetic() const {
  SyntheticSpec s;
  s.nodes = get_size("synth.V");
  s.rho = get_double("synth.rho");
  s.lambda = get_double("synth.lambda");
  s.noise_std = get_double("synth.noise_std");
  s.length = get_size("synth.length");
  s.burn_in = get_size("synth.burn_in");
  return s;
}

NoiseSchedule RunConfig::schedule() const {
  return make_schedule(parse_schedule_kind(get("diffusion.schedule")), static_cast<int>(get_int("diffusion.N")),
                       get_double("diffusion.beta_1"), get_double("diffusion.beta_N"));
}

}  // namespace diffstg
