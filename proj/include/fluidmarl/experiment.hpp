// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLUIDMARL_EXPERIMENT_HPP_
#define FLUIDMARL_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fluidmarl/analysis.hpp"
#include "fluidmarl/magrpo.hpp"

namespace fluidmarl {

struct AnalysisSettings {
  int samples = 2000;
  int resolution = 50;
  int horizon = 5;
  std::string sweep_parameter = "N";
  std::vector<double> sweep_values{2, 5};
};

struct ExperimentConfig {
  NetworkConfig network;
  Algorithm algorithm = Algorithm::kMagrpo;
  MagrpoConfig trainer;  // trainer.warmup holds the MAPPO settings
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "runs/default";
  long long checkpoint_every = 0;  // in updates; 0 keeps only warm-up and final checkpoints
  long long eval_every = 5000;     // environment steps between evaluation points
  int eval_episodes = 32;
  double ema = 0.99;
  bool freeze_fa = false;
  AnalysisSettings analysis;
  std::string source_text;  // raw config text, hashed into the manifest

  bool entropy_horizon_follows_budget = true;

  long long steps() const { return trainer.total_steps; }
  // Replaces the step budget and rescales what derives from it.
  void set_steps(long long steps);
  void validate() const;
};

// Sections: [network], [experiment], [trainer], [schedule], [mappo],
// [magrpo], [analysis]. See the README for keys.
ExperimentConfig parse_experiment(const ConfigFile& file);

std::string algorithm_name(Algorithm algorithm);

// y_0 = x_0, y_t = f y_{t-1} + (1 - f) x_t.
std::vector<double> ema_curve(const std::vector<double>& values, double factor);

struct EvalResult {
  std::vector<double> episode_sum_rates;  // mean per-step reward of each episode
  double mean = 0;
};

// Mean-action rollouts on episodes keyed by (seed, episode); parameters are
// only read.
EvalResult evaluate_policy(const GaussianPolicy& policy, const NetworkConfig& network, StepOptions options,
                           int episodes, int horizon, std::uint64_t seed);

// Loads a checkpoint written by run_training, checks it against the network
// and trainer shape of `cfg` and evaluates its mean actions.
struct CheckpointEval {
  EvalResult result;
  std::vector<double> ema;
};
CheckpointEval evaluate_checkpoint(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);

struct EvalPoint {
  long long step = 0;
  EvalResult result;
};

struct RunResult {
  std::vector<EvalPoint> evaluations;
  std::vector<double> ema;  // over the concatenated per-episode sum-rates
  double final_ema = 0;
  bool has_warmup_baseline = false;
  double warmup_baseline = 0;  // mean eval sum-rate of the warm-up checkpoint
  double train_seconds = 0;    // rollout + update time, evaluation excluded
  double update_seconds = 0;
  double collect_seconds = 0;
  long long steps = 0;
  long long updates = 0;
  std::vector<double> trajectory_returns;  // every training trajectory, in order
  std::uint64_t critic_calls_main = 0;     // critic evaluations after warm-up
};

// Trains, evaluates and writes metrics.csv, timing.csv, eval.csv,
// returns.csv, checkpoints/ and manifest.json under cfg.out_dir. A failure leaves the
// partial artifacts plus a manifest with status "failed" and rethrows.
RunResult run_training(const ExperimentConfig& cfg);

struct RuntimeComparison {
  RunResult mappo;
  RunResult magrpo;
  double wall_ratio = 0;     // magrpo / mappo training seconds
  double update_ratio = 0;   // magrpo / mappo update-phase seconds
  double flop_ratio = 0;     // count_update_flops magrpo / mappo
};

// Runs both algorithms on `cfg` with its step budget, in out_dir/mappo and
// out_dir/magrpo, and writes out_dir/compare.json.
RuntimeComparison compare_runtimes(const ExperimentConfig& cfg);

double flop_ratio(const ExperimentConfig& cfg);

// SHA-256 of `text` as lowercase hex.
std::string sha256_hex(const std::string& text);

}  // namespace fluidmarl

#endif  // FLUIDMARL_EXPERIMENT_HPP_
