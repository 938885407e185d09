// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

// Trajectory collection and the pieces both trainers share: learning-rate
// and entropy schedules, the actor optimizer and per-update metrics.

#ifndef FLUIDMARL_ROLLOUT_HPP_
#define FLUIDMARL_ROLLOUT_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fluidmarl/env.hpp"
#include "fluidmarl/policy.hpp"

namespace fluidmarl {

struct Trajectory {
  std::vector<Eigen::MatrixXd> observations;  // [t]: d_o x N
  std::vector<Eigen::MatrixXd> actions;       // [t]: d_a x N, normalized
  Eigen::MatrixXd log_probs;                  // N x T, behavior policy
  Eigen::MatrixXd states;                     // d_s x T, empty unless recorded
  Eigen::VectorXd rewards;                    // T
  Eigen::VectorXd values;                     // T + 1 with a zero bootstrap, empty without a critic
  double ret = 0;                             // sum of rewards

  int length() const { return static_cast<int>(rewards.size()); }
};

struct TrajectoryBatch {
  std::vector<Trajectory> trajectories;

  long long steps() const;
  Eigen::VectorXd returns() const;
  double mean_reward() const;
};

// Resets `env` and rolls the stochastic policy for `horizon` steps. States
// and critic values are recorded only when `critic` is given.
Trajectory collect_trajectory(Environment& env, const GaussianPolicy& policy, const Critic* critic, int horizon,
                              Rng& rng);

// Trajectory g uses its own stream derived from (seed, first_index + g), so
// batches are reproducible regardless of how they are split.
TrajectoryBatch collect(Environment& env, const GaussianPolicy& policy, const Critic* critic, int count,
                        int horizon, std::uint64_t seed, std::uint64_t first_index);

// Flattens a batch into per-(trajectory, step, agent) policy samples. The
// advantage of step t of trajectory g is step_advantages[g](t) and every
// sample gets `weight`.
PolicySamples make_policy_samples(const GaussianPolicy& policy, const TrajectoryBatch& batch,
                                  const std::vector<Eigen::VectorXd>& step_advantages, double weight);

// ---------------------------------------------------------------------------

struct ScheduleConfig {
  double lr_initial = 3e-5;
  double lr_floor = 5e-6;
  long long lr_hold_updates = 800;
  int plateau_patience = 50;
  double plateau_smoothing = 0.9;  // EMA factor on the actor loss
  double entropy_start = 0.003;
  double entropy_end = 0.0008;
  long long entropy_horizon_steps = 8'000'000;
};

// Holds the learning rate for lr_hold_updates updates, then halves it
// whenever the smoothed actor loss has not reached a new minimum for
// plateau_patience updates. Never drops below lr_floor.
class LearningRateSchedule {
 public:
  explicit LearningRateSchedule(const ScheduleConfig& cfg = {});

  double lr() const { return lr_; }
  long long updates() const { return updates_; }
  // Records the loss of one finished update; returns the rate for the next.
  double observe(double actor_loss);
  // Forces one halving step, as if a plateau had been detected.
  double halve();

 private:
  ScheduleConfig cfg_;
  double lr_;
  long long updates_ = 0;
  bool has_smoothed_ = false;
  double smoothed_ = 0;
  double best_ = 0;
  int since_best_ = 0;
};

double entropy_coefficient(const ScheduleConfig& cfg, long long env_steps);

// Adam on the trunk and on the log-std with a shared learning rate and
// optional global gradient-norm clipping.
class ActorOptimizer {
 public:
  ActorOptimizer() = default;
  explicit ActorOptimizer(const GaussianPolicy& policy);

  // Returns the gradient norm before clipping. max_norm <= 0 disables clipping.
  double step(GaussianPolicy& policy, Eigen::VectorXd trunk_grad, Eigen::VectorXd log_std_grad, double lr,
              double max_norm);

 private:
  Adam<double> trunk_;
  Adam<double> log_std_;
};

// Scales `grad` to `max_norm` when larger; returns the original norm.
double clip_gradient(Eigen::VectorXd& grad, double max_norm);

struct UpdateMetrics {
  std::string phase;  // "mappo", "warmup" or "main"
  long long update = 0;
  long long step = 0;  // environment steps consumed so far
  double reward_mean = 0;
  double actor_loss = 0;
  double critic_loss = 0;
  double entropy = 0;
  double lr = 0;
  double entropy_coef = 0;
  double first_ratio = 1;  // mean ratio of the first epoch
  double mean_ratio = 1;   // mean ratio of the last epoch
  double clip_fraction = 0;
  double actor_grad_norm = 0;
  double critic_grad_norm = 0;
  int group_size = 0;
  double mean_abs_advantage = 0;
  double kl_mean = 0;
  double collect_seconds = 0;
  double update_seconds = 0;
  Eigen::VectorXd returns;  // per-trajectory sum of rewards of this batch
};

}  // namespace fluidmarl

#endif  // FLUIDMARL_ROLLOUT_HPP_
