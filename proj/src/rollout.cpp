// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include "fluidmarl/rollout.hpp"

#include <algorithm>
#include <cmath>

namespace fluidmarl {

long long TrajectoryBatch::steps() const {
  long long n = 0;
  for (const auto& t : trajectories) n += t.length();
  return n;
}

Eigen::VectorXd TrajectoryBatch::returns() const {
  Eigen::VectorXd r(static_cast<Eigen::Index>(trajectories.size()));
  for (std::size_t g = 0; g < trajectories.size(); ++g) r(static_cast<Eigen::Index>(g)) = trajectories[g].ret;
  return r;
}

double TrajectoryBatch::mean_reward() const {
  double total = 0;
  for (const auto& t : trajectories) total += t.rewards.sum();
  const long long n = steps();
  return n > 0 ? total / static_cast<double>(n) : 0.0;
}

Trajectory collect_trajectory(Environment& env, const GaussianPolicy& policy, const Critic* critic, int horizon,
                              Rng& rng) {
  if (horizon < 1) throw InvalidConfig("trajectory length must be at least 1");
  env.reset(rng);
  const int n = env.config().num_bs;
  Trajectory tr;
  tr.log_probs.resize(n, horizon);
  tr.rewards.resize(horizon);
  if (critic) tr.states.resize(env.state_size(), horizon);
  const Eigen::VectorXd log_std = policy.log_std();
  for (int t = 0; t < horizon; ++t) {
    Eigen::MatrixXd obs = env.observation_matrix();
    if (critic) tr.states.col(t) = env.state_vector();
    const Eigen::MatrixXd mean = policy.mean(policy.make_input(obs));
    auto [actions, log_probs] = sample_actions(rng, mean, log_std);
    tr.log_probs.col(t) = log_probs;
    tr.rewards(t) = env.step_normalized(actions);
    tr.observations.push_back(std::move(obs));
    tr.actions.push_back(std::move(actions));
  }
  if (critic) {
    tr.values = Eigen::VectorXd::Zero(horizon + 1);
    tr.values.head(horizon) = critic->forward(tr.states);
  }
  tr.ret = tr.rewards.sum();
  return tr;
}

TrajectoryBatch collect(Environment& env, const GaussianPolicy& policy, const Critic* critic, int count,
                        int horizon, std::uint64_t seed, std::uint64_t first_index) {
  TrajectoryBatch batch;
  batch.trajectories.reserve(static_cast<std::size_t>(count));
  for (int g = 0; g < count; ++g) {
    Rng rng = make_rng(seed, Stream::kRollout, {first_index + static_cast<std::uint64_t>(g)});
    batch.trajectories.push_back(collect_trajectory(env, policy, critic, horizon, rng));
  }
  return batch;
}

PolicySamples make_policy_samples(const GaussianPolicy& policy, const TrajectoryBatch& batch,
                                  const std::vector<Eigen::VectorXd>& step_advantages, double weight) {
  if (step_advantages.size() != batch.trajectories.size())
    throw ShapeMismatch("make_policy_samples: one advantage vector per trajectory");
  const int n = policy.num_agents();
  const long long total = batch.steps() * n;
  PolicySamples s;
  s.inputs.resize(policy.observation_size() + n, total);
  s.actions.resize(policy.action_size(), total);
  s.old_log_probs.resize(total);
  s.advantages.resize(total);
  s.weights = Eigen::VectorXd::Constant(total, weight);
  Eigen::Index col = 0;
  for (std::size_t g = 0; g < batch.trajectories.size(); ++g) {
    const Trajectory& tr = batch.trajectories[g];
    if (step_advantages[g].size() != tr.length())
      throw ShapeMismatch("make_policy_samples: advantage length differs from trajectory length");
    for (int t = 0; t < tr.length(); ++t) {
      const auto ut = static_cast<std::size_t>(t);
      s.inputs.middleCols(col, n) = policy.make_input(tr.observations[ut]);
      s.actions.middleCols(col, n) = tr.actions[ut];
      s.old_log_probs.segment(col, n) = tr.log_probs.col(t);
      s.advantages.segment(col, n).setConstant(step_advantages[g](t));
      col += n;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

LearningRateSchedule::LearningRateSchedule(const ScheduleConfig& cfg) : cfg_(cfg), lr_(cfg.lr_initial) {}

double LearningRateSchedule::halve() {
  lr_ = std::max(cfg_.lr_floor, lr_ / 2);
  since_best_ = 0;
  best_ = smoothed_;
  return lr_;
}

double LearningRateSchedule::observe(double actor_loss) {
  ++updates_;
  if (!has_smoothed_) {
    smoothed_ = actor_loss;
    best_ = actor_loss;
    has_smoothed_ = true;
  } else {
    smoothed_ = cfg_.plateau_smoothing * smoothed_ + (1 - cfg_.plateau_smoothing) * actor_loss;
  }
  if (smoothed_ < best_) {
    best_ = smoothed_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  if (updates_ > cfg_.lr_hold_updates && since_best_ >= cfg_.plateau_patience) halve();
  return lr_;
}

double entropy_coefficient(const ScheduleConfig& cfg, long long env_steps) {
  if (cfg.entropy_horizon_steps <= 0 || env_steps >= cfg.entropy_horizon_steps) return cfg.entropy_end;
  const double frac = static_cast<double>(std::max(0LL, env_steps)) / static_cast<double>(cfg.entropy_horizon_steps);
  return cfg.entropy_start + (cfg.entropy_end - cfg.entropy_start) * frac;
}

// ---------------------------------------------------------------------------

double clip_gradient(Eigen::VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0 && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

ActorOptimizer::ActorOptimizer(const GaussianPolicy& policy)
    : trunk_(policy.trunk().num_parameters(), 0.0), log_std_(policy.action_size(), 0.0) {}

double ActorOptimizer::step(GaussianPolicy& policy, Eigen::VectorXd trunk_grad, Eigen::VectorXd log_std_grad,
                            double lr, double max_norm) {
  const double norm = std::sqrt(trunk_grad.squaredNorm() + log_std_grad.squaredNorm());
  if (max_norm > 0 && norm > max_norm) {
    trunk_grad *= max_norm / norm;
    log_std_grad *= max_norm / norm;
  }
  trunk_.lr = lr;
  log_std_.lr = lr;
  trunk_.update(policy.trunk().parameters(), trunk_grad);
  log_std_.update(policy.raw_log_std(), log_std_grad);
  return norm;
}

}  // namespace fluidmarl
