// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include "fluidmarl/magrpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "fluidmarl/advantage.hpp"

namespace fluidmarl {

void MagrpoConfig::validate() const {
  warmup.validate();
  if (group_size < 2) throw InvalidConfig("magrpo.G must be >= 2");
  if (!(clip > 0 && clip < 1)) throw InvalidConfig("magrpo.clip must lie in (0, 1)");
  if (!(kl_coef >= 0)) throw InvalidConfig("magrpo.kl_coef must be >= 0");
  if (epochs < 1) throw InvalidConfig("magrpo.epochs must be >= 1");
  const long long ref = effective_reference_steps();
  if (ref <= 0) throw InvalidConfig("magrpo.T_ref must be positive");
  if (ref > total_steps) throw InvalidConfig("magrpo.T_ref must not exceed T_max");
}

MagrpoTrainer::MagrpoTrainer(NetworkConfig network, StepOptions options, MagrpoConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), mappo_(std::move(network), options, cfg_.warmup, seed) {
  cfg_.validate();
}

long long MagrpoTrainer::warmup_steps() const {
  const long long t = cfg_.warmup.horizon;
  return (cfg_.effective_reference_steps() + t - 1) / t * t;
}

const GaussianPolicy& MagrpoTrainer::reference() const {
  if (!reference_) throw Error("reference policy requested before warm-up finished");
  return *reference_;
}

bool MagrpoTrainer::done() const { return !in_warmup() && steps() >= cfg_.total_steps; }

void MagrpoTrainer::finish_warmup() { reference_ = mappo_.policy(); }

UpdateMetrics MagrpoTrainer::iterate() {
  if (in_warmup()) {
    UpdateMetrics m = mappo_.iterate(warmup_steps());
    m.phase = "warmup";
    if (mappo_.steps() >= warmup_steps()) finish_warmup();
    return m;
  }
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  TrajectoryBatch group = collect_group();
  const auto t1 = Clock::now();
  UpdateMetrics m = update(group);
  m.collect_seconds = std::chrono::duration<double>(t1 - t0).count();
  m.update_seconds = std::chrono::duration<double>(Clock::now() - t1).count();
  return m;
}

void MagrpoTrainer::train() {
  while (!done()) iterate();
}

TrajectoryBatch MagrpoTrainer::collect_group() {
  // The last group shrinks to what is left of the budget, but never below two.
  const long long t = cfg_.warmup.horizon;
  const long long needed = (std::max(0LL, cfg_.total_steps - steps()) + t - 1) / t;
  const int count = static_cast<int>(std::clamp<long long>(needed, 2, cfg_.group_size));
  const std::uint64_t first = mappo_.trajectories();
  TrajectoryBatch group =
      collect(mappo_.env(), mappo_.policy(), nullptr, count, cfg_.warmup.horizon, mappo_.seed(), first);
  mappo_.advance_counters(mappo_.steps() + group.steps(), first + static_cast<std::uint64_t>(count));
  return group;
}

UpdateMetrics MagrpoTrainer::update(const TrajectoryBatch& group) {
  const GaussianPolicy& ref = reference();
  GaussianPolicy& policy = mappo_.policy();
  const int n = policy.num_agents();
  const std::size_t g_count = group.trajectories.size();
  if (g_count < 2) throw InvalidConfig("magrpo update: group needs at least two trajectories");

  const Eigen::VectorXd group_adv = group_relative_advantage(group.returns());
  std::vector<Eigen::VectorXd> adv(g_count);
  int horizon = 0;
  for (std::size_t g = 0; g < g_count; ++g) {
    const int t = group.trajectories[g].length();
    horizon = std::max(horizon, t);
    adv[g] = Eigen::VectorXd::Constant(t, group_adv(static_cast<Eigen::Index>(g)));
  }

  // 1 / (G T) per sample; summing over agents gives the per-agent objectives.
  PolicySamples samples =
      make_policy_samples(policy, group, adv, 1.0 / (static_cast<double>(g_count) * static_cast<double>(horizon)));
  samples.ref_log_probs = gaussian_log_prob(samples.actions, ref.mean(samples.inputs), ref.log_std());
  last_advantages_ = samples.advantages;

  UpdateMetrics m;
  m.phase = "main";
  m.group_size = static_cast<int>(g_count);
  m.reward_mean = group.mean_reward();
  m.returns = group.returns();
  m.lr = mappo_.schedule().lr();
  m.entropy_coef = entropy_coefficient(cfg_.warmup.schedule, steps());
  m.mean_abs_advantage = group_adv.cwiseAbs().mean();
  SurrogateOptions opts;
  opts.clip = cfg_.clip;
  opts.kl_coef = cfg_.kl_coef;
  opts.entropy_weight = m.entropy_coef * n;

  double loss_sum = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    SurrogateResult r = surrogate_gradient(policy, samples, opts);
    if (!std::isfinite(r.objective) || !r.trunk_grad.allFinite() || !r.log_std_grad.allFinite()) {
      std::ostringstream msg;
      msg << "magrpo update " << updates_ << " epoch " << epoch << ": non-finite loss (objective " << r.objective
          << ", kl " << r.kl << ", mean ratio " << r.mean_ratio << ")";
      throw NonFiniteLoss(msg.str());
    }
    if (epoch == 0) m.first_ratio = r.mean_ratio;
    m.mean_ratio = r.mean_ratio;
    m.clip_fraction = r.clip_fraction;
    m.entropy = r.entropy;
    m.kl_mean = r.kl;
    loss_sum += -r.objective;
    m.actor_grad_norm = mappo_.actor_optimizer().step(policy, std::move(r.trunk_grad), std::move(r.log_std_grad),
                                                      m.lr, cfg_.warmup.max_grad_norm);
  }
  m.actor_loss = loss_sum / cfg_.epochs;
  mappo_.schedule().observe(m.actor_loss);
  ++updates_;
  m.update = mappo_.updates() + updates_;
  m.step = steps();
  return m;
}

Checkpoint MagrpoTrainer::checkpoint() const {
  Checkpoint ck;
  // Right at the hand-over no group update has run yet, so this is still the warm-up result.
  const bool warmup = in_warmup() || updates_ == 0;
  ck.phase = warmup ? "warmup" : "main";
  store_policy(ck, policy());
  if (warmup) store_critic(ck, mappo_.critic());
  return ck;
}

double count_update_flops(Algorithm algorithm, double j, double d_s, double d_o, double d_a, double group_size,
                          double hidden_layers) {
  if (j <= 0 || d_s <= 0 || d_o <= 0 || d_a <= 0 || hidden_layers < 0 || group_size < 0)
    throw InvalidConfig("count_update_flops: dimensions must be positive");
  if (algorithm == Algorithm::kMappo) return j * (d_s + d_o + d_a) + j + 2 * j * j * hidden_layers;
  return j * d_o + j * d_a + j * j * hidden_layers + group_size;
}

}  // namespace fluidmarl
