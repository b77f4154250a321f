#include "diffstg/ugnet.hpp"

#include <fstream>
#include <sstream>

namespace diffstg {

std::size_t UGnetConfig::padded_length() const {
  const std::size_t raw = 2 * length;
  if (!u_structure) return raw;
  const std::size_t unit = std::size_t{1} << depth;
  return (raw + unit - 1) / unit * unit;
}

std::size_t UGnetConfig::level_length(std::size_t level) const {
  return u_structure ? padded_length() >> level : padded_length();
}

std::size_t UGnetConfig::level_channels(std::size_t level) const {
  return channel_growth ? channels << level : channels;
}

void UGnetConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("ugnet config: " + what); };
  if (features == 0 || nodes == 0 || length == 0) fail("F, V and T must be positive");
  if (channels == 0 || kernel == 0) fail("C and K must be positive");
  if (depth == 0 || depth > 8) fail("depth must be in [1, 8]");
  if (embed_dim == 0 || embed_dim % 2 != 0) fail("D_embed must be a positive even number, got " + std::to_string(embed_dim));
}

namespace {

std::string flag(bool b) { return b ? "true" : "false"; }

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::invalid_argument(key + ": expected a boolean, got '" + v + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || x < 0) throw std::invalid_argument(key + ": expected a nonnegative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> UGnetConfig::to_entries() const {
  return {
      {"ugnet.F", std::to_string(features)},
      {"ugnet.V", std::to_string(nodes)},
      {"ugnet.T", std::to_string(length)},
      {"ugnet.C", std::to_string(channels)},
      {"ugnet.K", std::to_string(kernel)},
      {"ugnet.depth", std::to_string(depth)},
      {"ugnet.D_embed", std::to_string(embed_dim)},
      {"ugnet.channel_growth", flag(channel_growth)},
      {"ugnet.gcn_activation", std::string(to_string(gcn_activation))},
      {"ugnet.gcn", flag(use_gcn)},
      {"ugnet.tcn", flag(use_tcn)},
      {"ugnet.u_structure", flag(u_structure)},
  };
}

UGnetConfig UGnetConfig::from_entries(const std::map<std::string, std::string>& entries) {
  UGnetConfig c;
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  };
  if (auto* v = get("ugnet.F")) c.features = parse_size("ugnet.F", *v);
  if (auto* v = get("ugnet.V")) c.nodes = parse_size("ugnet.V", *v);
  if (auto* v = get("ugnet.T")) c.length = parse_size("ugnet.T", *v);
  if (auto* v = get("ugnet.C")) c.channels = parse_size("ugnet.C", *v);
  if (auto* v = get("ugnet.K")) c.kernel = parse_size("ugnet.K", *v);
  if (auto* v = get("ugnet.depth")) c.depth = parse_size("ugnet.depth", *v);
  if (auto* v = get("ugnet.D_embed")) c.embed_dim = parse_size("ugnet.D_embed", *v);
  if (auto* v = get("ugnet.channel_growth")) c.channel_growth = parse_flag("ugnet.channel_growth", *v);
  if (auto* v = get("ugnet.gcn_activation")) c.gcn_activation = parse_gcn_activation(*v);
  if (auto* v = get("ugnet.gcn")) c.use_gcn = parse_flag("ugnet.gcn", *v);
  if (auto* v = get("ugnet.tcn")) c.use_tcn = parse_flag("ugnet.tcn", *v);
  if (auto* v = get("ugnet.u_structure")) c.u_structure = parse_flag("ugnet.u_structure", *v);
  return c;
}

std::vector<double> noise_embedding(int n, std::size_t embed_dim) {
  if (embed_dim == 0 || embed_dim % 2 != 0) {
    throw std::invalid_argument("noise_embedding: D_embed must be even, got " + std::to_string(embed_dim));
  }
  if (n < 1) throw std::invalid_argument("noise_embedding: step must be >= 1, got " + std::to_string(n));
  constexpr double kBase = 10000.0;
  const double dim = static_cast<double>(embed_dim);
  std::vector<double> e(embed_dim);
  for (std::size_t d = 1; d <= embed_dim / 2; ++d) {
    const double freq = std::pow(kBase, -2.0 * static_cast<double>(d) / dim);
    e[2 * (d - 1)] = std::cos(n * freq);
    e[2 * (d - 1) + 1] = std::sin(n * freq);
  }
  return e;
}

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.txt";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint manifest " + path.string());
  std::map<std::string, std::string> entries;
  CheckpointManifest m;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream ss(line.substr(7));
      std::string name, file;
      if (!(ss >> name >> file)) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad tensor line");
      m.tensors.emplace_back(name, file);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("ugnet.", 0) == 0) {
      entries[key] = value;
    } else {
      m.metadata[key] = value;
    }
  }
  m.config = UGnetConfig::from_entries(entries);
  m.config.validate();
  return m;
}

void write_checkpoint_manifest(const std::filesystem::path& dir, const CheckpointManifest& manifest) {
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  out << "# diffstg checkpoint\n";
  for (const auto& [k, v] : manifest.config.to_entries()) out << k << " = " << v << "\n";
  for (const auto& [k, v] : manifest.metadata) out << k << " = " << v << "\n";
  for (const auto& [name, file] : manifest.tensors) out << "tensor " << name << " " << file << "\n";
}

}  // namespace diffstg
