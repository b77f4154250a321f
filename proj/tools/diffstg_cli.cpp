#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <iostream>
#include <random>

#include "diffstg/config.hpp"
#include "diffstg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace diffstg;

namespace {

struct Globals {
  std::string config_path;
  std::string profile;
  std::string out = "out";
  std::uint64_t seed = 0;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> explicit_keys;  // filled after parsing
};

RunConfig build_config(const Globals& g, const CLI::App& app) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg.load_file(g.config_path);
  if (!g.profile.empty()) cfg.apply_profile(g.profile);
  for (const auto& key : g.explicit_keys) cfg.set(key, g.overrides.at(key));
  if (app.count("--seed")) cfg.set("run.seed", std::to_string(g.seed));
  return cfg;
}

fs::path prepare_out(const Globals& g) {
  fs::path out(g.out);
  fs::create_directories(out);
  return out;
}

void echo_config(const RunConfig& cfg, const fs::path& out) {
  cfg.write(out / "effective.conf");
  fmt::print("effective config: {}\n", (out / "effective.conf").string());
}

void ensure_seed(RunConfig& cfg) {
  if (!cfg.is_set("run.seed")) cfg.set("run.seed", std::to_string(std::random_device{}() * 0x100000001ULL));
}

void require_file(const RunConfig& cfg, const std::string& key) {
  if (!cfg.is_set(key)) throw ConfigError(key + " is not set");
  if (!fs::is_regular_file(cfg.get(key))) throw ConfigError(key + ": no such file '" + cfg.get(key) + "'");
}

int cmd_synth(RunConfig& cfg, const fs::path& out) {
  if (!cfg.is_set("run.seed")) throw ConfigError("synth needs an explicit seed (--seed or run.seed)");
  const auto spec = cfg.synthetic();
  spec.validate();
  const auto ds = generate_synthetic(spec, cfg.get_u64("run.seed"));
  write_signals_csv(out / "signals.csv", ds);
  write_adjacency_csv(out / "adjacency.csv", *ds.graph);
  SyntheticOracle oracle(spec, cfg.get_size("data.T_p"));
  write_oracle_csv(out / "oracle.csv", ds, oracle, cfg.get_size("data.T_h"));
  cfg.set("data.signals", (out / "signals.csv").string());
  cfg.set("data.adjacency", (out / "adjacency.csv").string());
  echo_config(cfg, out);
  fmt::print("wrote {} rows x {} nodes to {}\n", ds.rows, ds.nodes, out.string());
  return 0;
}

std::map<std::string, std::string> run_metadata(const RunConfig& cfg) {
  std::map<std::string, std::string> meta;
  for (const auto& [k, v] : cfg.values()) {
    if (k.rfind("ugnet.", 0) != 0) meta[k] = v;
  }
  return meta;
}

TrainResult train_one(RunConfig& cfg, const fs::path& out) {
  require_file(cfg, "data.signals");
  require_file(cfg, "data.adjacency");
  ensure_seed(cfg);
  const auto tcfg = cfg.train();
  tcfg.validate();
  cfg.sampler();
  fs::create_directories(out);
  echo_config(cfg, out);

  const auto ds = load_csv(cfg.get("data.signals"), cfg.get("data.adjacency"));
  const auto ex =
      prepare_experiment(ds, cfg.get_size("data.T_h"), cfg.get_size("data.T_p"), cfg.get_size("data.stride"));
  fmt::print("windows: train {}, val {}, test {}\n", ex.train.size(), ex.val.size(), ex.test.size());
  UGnet<float> net(cfg.ugnet(ds.nodes), tcfg.seed);
  fmt::print("ugnet parameters: {}\n", net.parameter_count());
  auto result = train<float>(net, ex.train, ex.val, tcfg, out, run_metadata(cfg));
  for (const auto& e : result.log) {
    fmt::print("epoch {:3d}  loss {:.5f}  val_crps {:.5f}  lr {:.2e}  {:.1f}s  clipped {}\n", e.epoch, e.train_loss,
               e.val_crps, e.lr, e.wall_seconds, e.clipped_steps);
  }
  fmt::print("best epoch {} (val crps {:.5f}){}{}\n", result.best_epoch, result.best_val_crps,
             result.early_stopped ? ", early stopped" : "", result.budget_exhausted ? ", time budget reached" : "");
  return result;
}

int cmd_train(RunConfig& cfg, const fs::path& out) {
  train_one(cfg, out);
  return 0;
}

struct GridOptions {
  std::vector<int> steps{50, 100, 200};
  std::vector<double> betas{0.1, 0.2, 0.3, 0.4};
};

int cmd_train_grid(RunConfig& cfg, const fs::path& out, const GridOptions& grid) {
  require_file(cfg, "data.signals");
  require_file(cfg, "data.adjacency");
  ensure_seed(cfg);
  std::ofstream csv(out / "grid.csv");
  csv << "N,beta_N,best_epoch,best_val_crps\n";
  for (int n : grid.steps) {
    for (double b : grid.betas) {
      RunConfig run = cfg;
      run.set("diffusion.N", std::to_string(n));
      run.set("diffusion.beta_N", fmt::format("{}", b));
      const auto dir = out / fmt::format("N{}_beta{}", n, b);
      fmt::print("== N={} beta_N={} -> {}\n", n, b, dir.string());
      const auto r = train_one(run, dir);
      csv << fmt::format("{},{},{},{:.6g}\n", n, b, r.best_epoch, r.best_val_crps) << std::flush;
    }
  }
  return 0;
}

// Settings baked into a checkpoint that sampling must reproduce.
const std::vector<std::string> kModelKeys = {"diffusion.N", "diffusion.beta_1", "diffusion.beta_N",
                                             "diffusion.schedule", "data.T_h", "data.T_p"};

struct LoadedModel {
  UGnet<float> net;
  NoiseSchedule schedule;
};

LoadedModel load_model(RunConfig& cfg, const Globals& g, const fs::path& checkpoint) {
  CheckpointManifest manifest;
  auto net = load_checkpoint<float>(checkpoint, &manifest);
  for (const auto& key : kModelKeys) {
    auto it = manifest.metadata.find(key);
    if (it == manifest.metadata.end()) continue;
    const bool explicit_key = std::find(g.explicit_keys.begin(), g.explicit_keys.end(), key) != g.explicit_keys.end();
    if (explicit_key && cfg.get(key) != it->second) {
      throw ConfigError(fmt::format("{} = {} conflicts with the checkpoint's {} = {}", key, cfg.get(key), key,
                                    it->second));
    }
    cfg.set(key, it->second);
  }
  for (const char* key : {"data.signals", "data.adjacency"}) {
    auto it = manifest.metadata.find(key);
    if (!cfg.is_set(key) && it != manifest.metadata.end()) cfg.set(key, it->second);
  }
  const std::size_t length = cfg.get_size("data.T_h") + cfg.get_size("data.T_p");
  if (net.config().length != length) {
    throw ConfigError(fmt::format("checkpoint length T={} vs data.T_h + data.T_p = {}", net.config().length, length));
  }
  return {std::move(net), cfg.schedule()};
}

void check_dims(const UGnet<float>& net, const STGDataset& ds) {
  if (net.config().nodes != ds.nodes) {
    throw std::invalid_argument(
        fmt::format("dimension mismatch: checkpoint has V={} nodes, dataset has V={}", net.config().nodes, ds.nodes));
  }
  if (net.config().features != ds.features) {
    throw std::invalid_argument(fmt::format("dimension mismatch: checkpoint has F={} features, dataset has F={}",
                                            net.config().features, ds.features));
  }
}

struct EvalOptions {
  std::string checkpoint;
  std::string split = "test";
  std::size_t max_windows = 0;
  std::vector<std::size_t> band_windows;
  std::string oracle;
  bool baselines = false;
};

int cmd_evaluate(RunConfig& cfg, const Globals& g, const fs::path& out, const EvalOptions& opt) {
  auto model = load_model(cfg, g, opt.checkpoint);
  require_file(cfg, "data.signals");
  require_file(cfg, "data.adjacency");
  if (!opt.oracle.empty() && !fs::is_regular_file(opt.oracle)) throw ConfigError("no such oracle file " + opt.oracle);
  const auto ens = cfg.ensemble();
  echo_config(cfg, out);

  const auto ds = load_csv(cfg.get("data.signals"), cfg.get("data.adjacency"));
  check_dims(model.net, ds);
  const auto ex =
      prepare_experiment(ds, cfg.get_size("data.T_h"), cfg.get_size("data.T_p"), cfg.get_size("data.stride"));
  const auto& windows = ex.windows(opt.split);
  for (std::size_t idx : opt.band_windows) {
    if (idx >= windows.size()) {
      throw std::out_of_range(fmt::format("window index {} is outside the {} split (valid 0..{})", idx, opt.split,
                                          windows.size() - 1));
    }
  }
  const auto subset = spread_windows(windows, opt.max_windows);
  const int subset_size = ens.sampler.subset_size ? ens.sampler.subset_size : model.schedule.steps();
  const std::string mode(to_string(ens.sampler.mode));
  fmt::print("evaluating {} of {} {} windows, S={} k={} M={} {}\n", subset.size(), windows.size(), opt.split,
             ens.samples, ens.reuse, subset_size, mode);

  std::vector<ReportRow> rows;
  rows.push_back({"diffstg", opt.split, ens.samples, ens.reuse, subset_size, mode,
                  evaluate_model<float>(model.net, subset, model.schedule, ens)});
  if (opt.baselines) {
    rows.push_back({"persistence", opt.split, ens.samples, 1, 0, "bootstrap",
                    evaluate_persistence(ex.train, subset, ens.samples, ens.seed)});
  }
  if (!opt.oracle.empty()) {
    const auto table = read_oracle_csv(opt.oracle);
    rows.push_back({"oracle", opt.split, ens.samples, 1, 0, "exact", evaluate_oracle(table, subset, ens.samples, ens.seed)});
  }
  write_report_csv(out / "report.csv", rows);
  for (const auto& r : rows) {
    fmt::print("{:<12} crps {:.5f}  mae {:.5f}  rmse {:.5f}  (raw crps {:.5f})\n", r.model, r.metrics.standardized.crps,
               r.metrics.standardized.mae, r.metrics.standardized.rmse, r.metrics.raw.crps);
  }
  for (std::size_t idx : opt.band_windows) {
    auto e = ensemble_sample<float>(model.net, windows[idx], model.schedule, ens);
    const auto path = out / fmt::format("band_{}_{}.csv", opt.split, idx);
    write_band_csv<float>(path, e, windows[idx]);
    fmt::print("band data: {}\n", path.string());
  }
  fmt::print("report: {}\n", (out / "report.csv").string());
  return 0;
}

struct BenchOptions {
  std::string checkpoint;
  std::vector<int> subsets;
  std::vector<std::size_t> reuse{1, 2};
  std::vector<std::size_t> samples{8, 32};
  std::size_t runs = 5;
  std::size_t windows = 1;
};

int cmd_bench(RunConfig& cfg, const Globals& g, const fs::path& out, BenchOptions opt) {
  auto model = load_model(cfg, g, opt.checkpoint);
  require_file(cfg, "data.signals");
  require_file(cfg, "data.adjacency");
  auto ens = cfg.ensemble();
  echo_config(cfg, out);
  const auto ds = load_csv(cfg.get("data.signals"), cfg.get("data.adjacency"));
  check_dims(model.net, ds);
  const auto ex =
      prepare_experiment(ds, cfg.get_size("data.T_h"), cfg.get_size("data.T_p"), cfg.get_size("data.stride"));
  const auto subset = spread_windows(ex.test, opt.windows);

  const int n = model.schedule.steps();
  if (opt.subsets.empty()) opt.subsets = {n, std::min(n, 20)};
  if (std::find(opt.samples.begin(), opt.samples.end(), 8) == opt.samples.end()) opt.samples.insert(opt.samples.begin(), 8);
  std::vector<BenchRow> rows;
  for (int m : opt.subsets) {
    if (m < 1 || m > n) throw std::invalid_argument(fmt::format("bench: M={} outside 1..{}", m, n));
    for (std::size_t k : opt.reuse) {
      for (std::size_t s : opt.samples) {
        if (k > s) continue;
        ens.samples = s;
        ens.reuse = k;
        ens.sampler.mode = SamplerMode::ddim;
        ens.sampler.subset_size = m;
        rows.push_back(bench_sampling<float>(model.net, subset, model.schedule, ens, opt.runs));
        const auto& r = rows.back();
        fmt::print("M={:<4} k={} S={:<3} trajectories={:<3} median {:.4f}s\n", r.subset, r.reuse, r.samples,
                   r.trajectories, r.median_seconds);
      }
    }
  }
  write_bench_csv(out / "bench.csv", rows);
  fmt::print("timings: {}\n", (out / "bench.csv").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic spatio-temporal graph forecasting with conditional diffusion (UGnet denoiser)"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Config file of `section.key = value` lines")->check(CLI::ExistingFile);
  app.add_option("--profile", g.profile, "Preset applied over the config file (tiny, default)");
  app.add_option("--seed", g.seed, "Seed (same as --run.seed)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  for (const auto& key : RunConfig::known_keys()) {
    app.add_option("--" + key, g.overrides[key], "default: " + RunConfig().get(key))->group("Config keys");
  }
  app.footer(std::string("Precedence: defaults < --config file < --profile < flags.\n"
                         "evaluate writes report.csv with columns\n  ") +
             kReportColumns +
             "\none row per horizon plus a summary row (horizon = all); *_std in standardized units, *_raw in\n"
             "data units. Band files band_<split>_<i>.csv: node,horizon,truth,mean,p5,p25,p75,p95 (data units).\n"
             "bench-sampling writes bench.csv: M,k,S,trajectories,median_seconds.");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic ring dataset (signals, adjacency, oracle)");
  auto* train_cmd = app.add_subcommand("train", "Train a UGnet checkpoint");

  GridOptions grid;
  auto* grid_cmd = app.add_subcommand("train-grid", "Train over a grid of N and beta_N");
  grid_cmd->add_option("--N", grid.steps, "Diffusion step counts")->delimiter(',')->capture_default_str();
  grid_cmd->add_option("--beta_N", grid.betas, "Final noise levels")->delimiter(',')->capture_default_str();

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint with CRPS, MAE and RMSE");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--split", eval.split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--max-windows", eval.max_windows, "Evenly spaced window subset, 0 = all")->capture_default_str();
  eval_cmd->add_option("--windows", eval.band_windows, "Window indices for band CSVs")->delimiter(',');
  eval_cmd->add_option("--oracle", eval.oracle, "oracle.csv from synth; adds an oracle row");
  eval_cmd->add_flag("--baselines", eval.baselines, "Add a persistence-ensemble row");

  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench-sampling", "Time ensemble sampling over a grid of M, k, S");
  bench_cmd->add_option("--checkpoint", bench.checkpoint, "Checkpoint directory")->required();
  bench_cmd->add_option("--M", bench.subsets, "Sampling steps (default N,20)")->delimiter(',');
  bench_cmd->add_option("--k", bench.reuse, "Samples reused per trajectory")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--S", bench.samples, "Ensemble sizes (8 always included)")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--runs", bench.runs, "Repetitions per configuration")->capture_default_str();
  bench_cmd->add_option("--windows", bench.windows, "Test windows sampled together")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (const auto& key : RunConfig::known_keys()) {
      if (app.count("--" + key)) g.explicit_keys.push_back(key);
    }
    RunConfig cfg = build_config(g, app);
    const fs::path out = prepare_out(g);
    if (*synth) return cmd_synth(cfg, out);
    if (*train_cmd) return cmd_train(cfg, out);
    if (*grid_cmd) return cmd_train_grid(cfg, out, grid);
    if (*eval_cmd) return cmd_evaluate(cfg, g, out, eval);
    if (*bench_cmd) return cmd_bench(cfg, g, out, bench);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
