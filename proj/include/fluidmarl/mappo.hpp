// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLUIDMARL_MAPPO_HPP_
#define FLUIDMARL_MAPPO_HPP_

#include <cstdint>

#include "fluidmarl/rollout.hpp"

namespace fluidmarl {

struct MappoConfig {
  int horizon = 5;              // T
  int batch_trajectories = 16;  // trajectories per update
  int epochs = 5;               // E
  double clip = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  double max_grad_norm = 10.0;  // <= 0 disables clipping
  NetworkShape shape;
  double initial_log_std = -0.5;
  ScheduleConfig schedule;

  void validate() const;
};

// Centralized critic on the global state, shared decentralized actor.
class MappoTrainer {
 public:
  MappoTrainer(NetworkConfig network, StepOptions options, MappoConfig cfg, std::uint64_t seed);

  // Collects up to batch_trajectories trajectories (fewer when the budget
  // would be overshot) and runs one update.
  UpdateMetrics iterate(long long step_budget);
  // Runs iterate() until `step_budget` environment steps have been consumed.
  void train(long long step_budget);

  TrajectoryBatch collect_batch(int count);
  UpdateMetrics update(const TrajectoryBatch& batch);

  long long steps() const { return steps_; }
  long long updates() const { return updates_; }
  bool done(long long step_budget) const { return steps_ >= step_budget; }

  GaussianPolicy& policy() { return policy_; }
  const GaussianPolicy& policy() const { return policy_; }
  Critic& critic() { return critic_; }
  const Critic& critic() const { return critic_; }
  Environment& env() { return env_; }
  ActorOptimizer& actor_optimizer() { return actor_opt_; }
  LearningRateSchedule& schedule() { return schedule_; }
  const MappoConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  // Lets another trainer continue the step and trajectory counters.
  void advance_counters(long long steps, std::uint64_t trajectories);
  std::uint64_t trajectories() const { return next_trajectory_; }

  Checkpoint checkpoint(const std::string& phase) const;

 private:
  MappoConfig cfg_;
  std::uint64_t seed_;
  Environment env_;
  GaussianPolicy policy_;
  Critic critic_;
  ActorOptimizer actor_opt_;
  Adam<double> critic_opt_;
  LearningRateSchedule schedule_;
  long long steps_ = 0;
  long long updates_ = 0;
  std::uint64_t next_trajectory_ = 0;
};

}  // namespace fluidmarl

#endif  // FLUIDMARL_MAPPO_HPP_
