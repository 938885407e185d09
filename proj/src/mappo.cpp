// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include "fluidmarl/mappo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "fluidmarl/advantage.hpp"

namespace fluidmarl {

void MappoConfig::validate() const {
  if (horizon < 1) throw InvalidConfig("trainer.T must be >= 1");
  if (batch_trajectories < 1) throw InvalidConfig("mappo.batch must be >= 1");
  if (epochs < 1) throw InvalidConfig("trainer.epochs must be >= 1");
  if (!(clip > 0 && clip < 1)) throw InvalidConfig("mappo.clip must lie in (0, 1)");
  if (gamma < 0 || gamma > 1) throw InvalidConfig("mappo.gamma must lie in [0, 1]");
  if (lambda < 0 || lambda > 1) throw InvalidConfig("mappo.lambda must lie in [0, 1]");
  if (!(schedule.lr_initial >= 0) || !(schedule.lr_floor >= 0)) throw InvalidConfig("learning rates must be >= 0");
  if (schedule.entropy_end > schedule.entropy_start) throw InvalidConfig("entropy schedule must be non-increasing");
  if (schedule.lr_floor > schedule.lr_initial) throw InvalidConfig("lr_floor must not exceed lr");
}

MappoTrainer::MappoTrainer(NetworkConfig network, StepOptions options, MappoConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), seed_(seed), env_(std::move(network), options), schedule_(cfg_.schedule) {
  cfg_.validate();
  const auto& net = env_.config();
  policy_ = GaussianPolicy(static_cast<int>(env_.observation_size()), net.num_bs,
                           static_cast<int>(env_.action_size()), cfg_.shape);
  critic_ = Critic(static_cast<int>(env_.state_size()), cfg_.shape);
  Rng rng = make_rng(seed_, Stream::kInit);
  policy_.initialize(rng, cfg_.initial_log_std);
  critic_.initialize(rng);
  actor_opt_ = ActorOptimizer(policy_);
  critic_opt_ = Adam<double>(critic_.net().num_parameters(), cfg_.schedule.lr_initial);
}

TrajectoryBatch MappoTrainer::collect_batch(int count) {
  TrajectoryBatch batch = collect(env_, policy_, &critic_, count, cfg_.horizon, seed_, next_trajectory_);
  next_trajectory_ += static_cast<std::uint64_t>(count);
  steps_ += batch.steps();
  return batch;
}

UpdateMetrics MappoTrainer::iterate(long long step_budget) {
  using Clock = std::chrono::steady_clock;
  const long long remaining = std::max(0LL, step_budget - steps_);
  const long long needed = (remaining + cfg_.horizon - 1) / cfg_.horizon;
  const int count = static_cast<int>(std::clamp<long long>(needed, 1, cfg_.batch_trajectories));
  const auto t0 = Clock::now();
  TrajectoryBatch batch = collect_batch(count);
  const auto t1 = Clock::now();
  UpdateMetrics m = update(batch);
  const auto t2 = Clock::now();
  m.collect_seconds = std::chrono::duration<double>(t1 - t0).count();
  m.update_seconds = std::chrono::duration<double>(t2 - t1).count();
  return m;
}

void MappoTrainer::train(long long step_budget) {
  while (!done(step_budget)) iterate(step_budget);
}

void MappoTrainer::advance_counters(long long steps, std::uint64_t trajectories) {
  steps_ = steps;
  next_trajectory_ = trajectories;
}

UpdateMetrics MappoTrainer::update(const TrajectoryBatch& batch) {
  const int n = policy_.num_agents();
  const std::size_t count = batch.trajectories.size();
  if (count == 0) throw ShapeMismatch("mappo update: empty batch");

  // Advantages and critic targets with the values recorded at collection.
  std::vector<Eigen::VectorXd> adv(count);
  Eigen::Index total_steps = 0;
  for (const auto& tr : batch.trajectories) total_steps += tr.length();
  Eigen::VectorXd flat_adv(total_steps);
  Eigen::VectorXd targets(total_steps);
  Eigen::MatrixXd states(env_.state_size(), total_steps);
  Eigen::Index pos = 0;
  for (std::size_t g = 0; g < count; ++g) {
    const Trajectory& tr = batch.trajectories[g];
    if (tr.values.size() != tr.length() + 1) throw ShapeMismatch("mappo update: trajectory lacks critic values");
    adv[g] = gae(tr.rewards, tr.values, cfg_.gamma, cfg_.lambda);
    targets.segment(pos, tr.length()) = bootstrapped_targets(adv[g], tr.values.head(tr.length()));
    flat_adv.segment(pos, tr.length()) = adv[g];
    states.middleCols(pos, tr.length()) = tr.states;
    pos += tr.length();
  }
  if (total_steps >= 2) {
    const NormalizedBatch nb = normalize_batch(flat_adv);
    pos = 0;
    for (std::size_t g = 0; g < count; ++g) {
      adv[g] = nb.values.segment(pos, adv[g].size());
      pos += adv[g].size();
    }
  }

  // Sum over agents of per-agent sample means.
  PolicySamples samples = make_policy_samples(policy_, batch, adv, 1.0 / static_cast<double>(total_steps));

  UpdateMetrics m;
  m.phase = "mappo";
  m.reward_mean = batch.mean_reward();
  m.returns = batch.returns();
  m.lr = schedule_.lr();
  m.entropy_coef = entropy_coefficient(cfg_.schedule, steps_);
  SurrogateOptions opts;
  opts.clip = cfg_.clip;
  opts.entropy_weight = m.entropy_coef * n;

  double actor_loss_sum = 0;
  double critic_loss_sum = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    SurrogateResult r = surrogate_gradient(policy_, samples, opts);
    Eigen::VectorXd cgrad;
    const double closs = critic_mse_gradient(critic_, states, targets, cgrad);
    if (!std::isfinite(r.objective) || !std::isfinite(closs) || !r.trunk_grad.allFinite() || !cgrad.allFinite()) {
      std::ostringstream msg;
      msg << "mappo update " << updates_ << " epoch " << epoch << ": non-finite loss (actor objective "
          << r.objective << ", critic loss " << closs << ", mean ratio " << r.mean_ratio << ")";
      throw NonFiniteLoss(msg.str());
    }
    if (epoch == 0) m.first_ratio = r.mean_ratio;
    m.mean_ratio = r.mean_ratio;
    m.clip_fraction = r.clip_fraction;
    m.entropy = r.entropy;
    actor_loss_sum += -r.objective;
    critic_loss_sum += closs;
    m.actor_grad_norm = actor_opt_.step(policy_, std::move(r.trunk_grad), std::move(r.log_std_grad), m.lr,
                                        cfg_.max_grad_norm);
    m.critic_grad_norm = clip_gradient(cgrad, cfg_.max_grad_norm);
    critic_opt_.lr = m.lr;
    critic_opt_.update(critic_.net().parameters(), cgrad);
  }
  m.actor_loss = actor_loss_sum / cfg_.epochs;
  m.critic_loss = critic_loss_sum / cfg_.epochs;
  m.mean_abs_advantage = samples.advantages.cwiseAbs().mean();
  schedule_.observe(m.actor_loss);
  ++updates_;
  m.update = updates_;
  m.step = steps_;
  return m;
}

Checkpoint MappoTrainer::checkpoint(const std::string& phase) const {
  Checkpoint ck;
  ck.phase = phase;
  store_policy(ck, policy_);
  store_critic(ck, critic_);
  return ck;
}

}  // namespace fluidmarl
