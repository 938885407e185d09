// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

// fluidmarl command line: train, eval, landscape, variance-sweep, bounds and
// compare. Exit status 0 on success, 1 for configuration errors, 2 for
// failures while running.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fluidmarl/experiment.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace fluidmarl;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<long long> steps;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "experiment config file")->required();
  cmd->add_option("--seed", flags.seed, "master seed, overrides experiment.seed");
  cmd->add_option("--out", flags.out, "output directory, overrides experiment.out");
  cmd->add_option("--steps", flags.steps, "environment-step budget, overrides experiment.steps");
}

ExperimentConfig load(const CommonFlags& flags) {
  ExperimentConfig cfg = parse_experiment(ConfigFile::load(flags.config));
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.out) cfg.out_dir = *flags.out;
  if (flags.steps) {
    cfg.set_steps(*flags.steps);
    cfg.validate();
  }
  return cfg;
}

fs::path prepare_out(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw InvalidConfig("experiment.out: cannot create '" + cfg.out_dir.string() + "': " + ec.message());
  return cfg.out_dir;
}

int cmd_train(const CommonFlags& flags) {
  const ExperimentConfig cfg = load(flags);
  const RunResult r = run_training(cfg);
  std::printf("%s: %lld steps, %lld updates, final EMA sum-rate %.4f bit/s/Hz, %.1f s training\n",
              algorithm_name(cfg.algorithm).c_str(), r.steps, r.updates, r.final_ema, r.train_seconds);
  if (r.has_warmup_baseline) std::printf("warm-up checkpoint sum-rate %.4f\n", r.warmup_baseline);
  std::printf("artifacts in %s\n", cfg.out_dir.string().c_str());
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint) {
  const ExperimentConfig cfg = load(flags);
  const CheckpointEval e = evaluate_checkpoint(cfg, checkpoint);
  std::printf("episode,sum_rate,ema\n");
  for (std::size_t i = 0; i < e.ema.size(); ++i)
    std::printf("%zu,%.17g,%.17g\n", i, e.result.episode_sum_rates[i], e.ema[i]);
  std::printf("# mean %.6f over %d episodes\n", e.result.mean, cfg.eval_episodes);
  return 0;
}

int cmd_landscape(const CommonFlags& flags) {
  const ExperimentConfig cfg = load(flags);
  const Landscape l = landscape_grid(cfg.network, cfg.analysis.resolution, cfg.seed);
  const fs::path path = prepare_out(cfg) / "landscape.csv";
  std::ofstream out(path, std::ios::binary);
  write_landscape_csv(out, l);
  if (!out) throw Error("cannot write " + path.string());
  std::printf("%dx%d grid, R in [%.4f, %.4f], written to %s\n", cfg.analysis.resolution, cfg.analysis.resolution,
              l.values.minCoeff(), l.values.maxCoeff(), path.string().c_str());
  return 0;
}

int cmd_sweep(const CommonFlags& flags) {
  const ExperimentConfig cfg = load(flags);
  const auto& a = cfg.analysis;
  const auto rows = variance_sweep(cfg.network, a.sweep_parameter, a.sweep_values, a.samples, cfg.seed, a.horizon);
  const fs::path path = prepare_out(cfg) / "variance_sweep.csv";
  std::ofstream out(path, std::ios::binary);
  write_sweep_csv(out, rows);
  if (!out) throw Error("cannot write " + path.string());
  write_sweep_csv(std::cout, rows);
  return 0;
}

int cmd_bounds(const CommonFlags& flags) {
  const ExperimentConfig cfg = load(flags);
  const BoundReport b = bound_report(cfg.network, cfg.analysis.horizon);
  const ScalingExponents& s = b.dominant_scaling;
  nlohmann::ordered_json j{{"T", cfg.analysis.horizon},
                           {"d_max_m", b.d_max},
                           {"position_variance_bound", b.lemma1},
                           {"sinr_jacobian_bound", b.jac_gamma_bound},
                           {"channel_jacobian_bound", b.jac_h_bound},
                           {"lipschitz_bound", b.lipschitz_bound},
                           {"return_variance_bound", b.theorem1},
                           {"scaling_exponents",
                            {{"N", s.num_bs},
                             {"K", s.num_users},
                             {"P_max", s.p_max},
                             {"M", s.num_antennas},
                             {"d", s.d_max},
                             {"T", s.horizon},
                             {"f", s.frequency},
                             {"L", s.num_paths}}}};
  const fs::path path = prepare_out(cfg) / "bounds.json";
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write " + path.string());
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_compare(const CommonFlags& flags) {
  const ExperimentConfig cfg = load(flags);
  const RuntimeComparison c = compare_runtimes(cfg);
  std::printf("steps: mappo %lld, magrpo %lld\n", c.mappo.steps, c.magrpo.steps);
  std::printf("training seconds: mappo %.2f, magrpo %.2f (ratio %.3f)\n", c.mappo.train_seconds,
              c.magrpo.train_seconds, c.wall_ratio);
  std::printf("update-phase seconds: mappo %.2f, magrpo %.2f (ratio %.3f)\n", c.mappo.update_seconds,
              c.magrpo.update_seconds, c.update_ratio);
  std::printf("update flop ratio %.3f\n", c.flop_ratio);
  std::printf("final EMA sum-rate: mappo %.4f, magrpo %.4f\n", c.mappo.final_ema, c.magrpo.final_ema);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fluidmarl: multi-agent training for fluid-antenna cell-free networks"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string checkpoint;
  auto* train = app.add_subcommand("train", "train the configured algorithm");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with mean actions");
  auto* landscape = app.add_subcommand("landscape", "sum-rate over a grid of single-FA positions (M = 1)");
  auto* sweep = app.add_subcommand("variance-sweep", "Monte-Carlo reward variance along one parameter");
  auto* bounds = app.add_subcommand("bounds", "analytic variance bounds for the configured network");
  auto* compare = app.add_subcommand("compare", "train MAPPO and MAGRPO on the same budget and compare cost");
  for (auto* cmd : {train, eval, landscape, sweep, bounds, compare}) add_common(cmd, flags);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(flags);
    if (*eval) return cmd_eval(flags, checkpoint);
    if (*landscape) return cmd_landscape(flags);
    if (*sweep) return cmd_sweep(flags);
    if (*bounds) return cmd_bounds(flags);
    if (*compare) return cmd_compare(flags);
  } catch (const InvalidConfig& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
