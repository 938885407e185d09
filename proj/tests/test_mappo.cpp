// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "doctest.h"
#include "fluidmarl/advantage.hpp"
#include "fluidmarl/mappo.hpp"

using namespace fluidmarl;

namespace {

MappoConfig small_config() {
  MappoConfig cfg;
  cfg.horizon = 5;
  cfg.batch_trajectories = 4;
  cfg.epochs = 3;
  cfg.shape = {16, 2};
  cfg.schedule.lr_initial = 1e-3;
  cfg.schedule.lr_floor = 1e-4;
  return cfg;
}

NetworkConfig small_network() {
  NetworkConfig net = default_network(2, 2, 2);
  net.validate();
  return net;
}

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("clipped surrogate") {
  CHECK(clipped_surrogate(1.0, 0.7, 0.2) == 0.7);
  CHECK(clipped_surrogate(1.0, -2.5, 0.05) == -2.5);
  CHECK(clipped_surrogate(2.0, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ratio(0.01, 5.0);
  std::normal_distribution<double> adv(0, 2);
  for (int i = 0; i < 10000; ++i) {
    const double a = adv(rng);
    CHECK(clipped_surrogate(ratio(rng), a, 0.2) <= 1.2 * std::abs(a) + 1e-15);
  }

  // Past the trust region in the direction the advantage favours, the
  // objective no longer depends on the ratio.
  const double h = 1e-6;
  for (auto [r, a] : {std::pair{1.5, 1.0}, std::pair{0.5, -1.0}, std::pair{3.0, 0.4}}) {
    const double d = (clipped_surrogate(r + h, a, 0.2) - clipped_surrogate(r - h, a, 0.2)) / (2 * h);
    CHECK(d == 0.0);
  }
  // Inside the region it is the plain ratio times the advantage.
  const double d = (clipped_surrogate(1.05 + h, 0.8, 0.2) - clipped_surrogate(1.05 - h, 0.8, 0.2)) / (2 * h);
  CHECK(d == doctest::Approx(0.8).epsilon(1e-8));
}

TEST_CASE("clipped samples contribute no policy gradient") {
  Rng rng(2);
  GaussianPolicy policy(3, 2, 2, {8, 2});
  policy.initialize(rng, -0.5, 1.0);
  PolicySamples s;
  s.inputs = policy.make_input(Eigen::MatrixXd::Ones(3, 2), {0, 1});
  const Eigen::MatrixXd mean = policy.mean(s.inputs);
  s.actions = mean.array() + 0.4;
  const Eigen::VectorXd logp = gaussian_log_prob(s.actions, mean, policy.log_std());
  s.old_log_probs = logp.array() - std::log(1.6);  // ratio 1.6
  s.advantages = Eigen::Vector2d(1.0, 2.0);
  s.weights = Eigen::Vector2d(0.5, 0.5);
  const SurrogateResult r = surrogate_gradient(policy, s, {0.2});
  CHECK(r.clip_fraction == 1.0);
  CHECK(r.trunk_grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.log_std_grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rollout collection") {
  MappoTrainer trainer(small_network(), {}, small_config(), 7);
  const TrajectoryBatch batch = trainer.collect_batch(3);
  REQUIRE(batch.trajectories.size() == 3);
  CHECK(batch.steps() == 15);
  CHECK(trainer.steps() == 15);
  const GaussianPolicy& pi = trainer.policy();
  for (const Trajectory& tr : batch.trajectories) {
    CHECK(tr.length() == 5);
    CHECK(tr.observations.size() == 5);
    CHECK(tr.actions.size() == 5);
    CHECK(tr.log_probs.cols() == 5);
    CHECK(tr.states.cols() == 5);
    CHECK(tr.values.size() == 6);
    CHECK(tr.values(5) == 0.0);
    CHECK(std::abs(tr.ret - tr.rewards.sum()) < 1e-12);
    for (int t = 0; t < 5; ++t) {
      const Eigen::MatrixXd mean = pi.mean(pi.make_input(tr.observations[t]));
      const Eigen::VectorXd lp = gaussian_log_prob(tr.actions[t], mean, pi.log_std());
      CHECK((lp - tr.log_probs.col(t)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(std::abs(tr.values(t) - critic_forward(trainer.critic(), tr.states.col(t))) < 1e-12);
    }
  }

  MappoTrainer again(small_network(), {}, small_config(), 7);
  const TrajectoryBatch repeat = again.collect_batch(3);
  for (std::size_t g = 0; g < 3; ++g) {
    CHECK(same_bits(batch.trajectories[g].rewards, repeat.trajectories[g].rewards));
    CHECK(same_bits(batch.trajectories[g].log_probs, repeat.trajectories[g].log_probs));
    CHECK(same_bits(batch.trajectories[g].actions[4], repeat.trajectories[g].actions[4]));
  }
}

TEST_CASE("MAPPO update") {
  SUBCASE("zero learning rate leaves parameters unchanged") {
    MappoConfig cfg = small_config();
    cfg.schedule.lr_initial = 0;
    cfg.schedule.lr_floor = 0;
    MappoTrainer trainer(small_network(), {}, cfg, 3);
    const Eigen::VectorXd actor = trainer.policy().trunk().parameters();
    const Eigen::VectorXd ls = trainer.policy().raw_log_std();
    const Eigen::VectorXd critic = trainer.critic().net().parameters();
    const UpdateMetrics m = trainer.iterate(1000);
    CHECK(same_bits(actor, trainer.policy().trunk().parameters()));
    CHECK(same_bits(ls, trainer.policy().raw_log_std()));
    CHECK(same_bits(critic, trainer.critic().net().parameters()));
    CHECK(std::isfinite(m.actor_loss));
    CHECK(m.critic_loss > 0);
    CHECK(m.entropy != 0);
    CHECK(m.update == 1);
  }
  SUBCASE("the first epoch is on-policy") {
    MappoTrainer trainer(small_network(), {}, small_config(), 4);
    const TrajectoryBatch batch = trainer.collect_batch(4);
    std::vector<Eigen::VectorXd> adv;
    Eigen::VectorXd flat(20);
    for (std::size_t g = 0; g < 4; ++g) {
      const auto& tr = batch.trajectories[g];
      adv.push_back(gae(tr.rewards, tr.values, 0.99, 0.95));
      flat.segment(5 * g, 5) = adv.back();
    }
    const Eigen::VectorXd norm = normalize_batch(flat).values;
    for (std::size_t g = 0; g < 4; ++g) adv[g] = norm.segment(5 * g, 5);
    const PolicySamples s = make_policy_samples(trainer.policy(), batch, adv, 1.0 / 20);
    const SurrogateResult r = surrogate_gradient(trainer.policy(), s, {0.2});
    CHECK((r.ratios.array() - 1).abs().maxCoeff() < 1e-9);
    // Weighted surrogate = sum over agents of the mean normalized advantage.
    CHECK(std::abs(r.surrogate) < 1e-9);
    const UpdateMetrics m = trainer.update(batch);
    CHECK(std::abs(m.first_ratio - 1) < 1e-9);
  }
  SUBCASE("critic loss falls every epoch on a frozen batch") {
    MappoConfig cfg = small_config();
    cfg.epochs = 1;
    MappoTrainer trainer(small_network(), {}, cfg, 5);
    const TrajectoryBatch batch = trainer.collect_batch(4);
    Eigen::MatrixXd states(trainer.env().state_size(), 20);
    Eigen::VectorXd targets(20);
    for (std::size_t g = 0; g < 4; ++g) {
      const auto& tr = batch.trajectories[g];
      states.middleCols(5 * g, 5) = tr.states;
      targets.segment(5 * g, 5) = gae(tr.rewards, tr.values, 0.99, 0.95) + tr.values.head(5);
    }
    auto loss = [&] { return (trainer.critic().forward(states) - targets).squaredNorm() / 20; };
    double prev = loss();
    for (int epoch = 0; epoch < 15; ++epoch) {
      trainer.update(batch);
      const double now = loss();
      CHECK(now < prev);
      prev = now;
    }
  }
  SUBCASE("non-finite losses abort the update") {
    MappoTrainer trainer(small_network(), {}, small_config(), 6);
    const TrajectoryBatch batch = trainer.collect_batch(2);
    trainer.policy().trunk().parameters()(0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(trainer.update(batch), NonFiniteLoss);
  }
  SUBCASE("the budget is met exactly") {
    MappoTrainer trainer(small_network(), {}, small_config(), 8);
    trainer.train(47);
    CHECK(trainer.steps() == 50);
    MappoTrainer exact(small_network(), {}, small_config(), 8);
    exact.train(60);
    CHECK(exact.steps() == 60);
    CHECK(exact.updates() == 3);
  }
}

TEST_CASE("shared parameters accumulate every agent's samples") {
  MappoTrainer trainer(small_network(), {}, small_config(), 9);
  const TrajectoryBatch batch = trainer.collect_batch(3);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0, 1);
  std::vector<Eigen::VectorXd> adv;
  for (int g = 0; g < 3; ++g) {
    adv.emplace_back(5);
    for (auto& a : adv.back()) a = normal(rng);
  }
  PolicySamples all = make_policy_samples(trainer.policy(), batch, adv, 1.0 / 15);
  // Push some ratios off 1 so clipping is exercised too.
  for (Eigen::Index i = 0; i < all.old_log_probs.size(); i += 3) all.old_log_probs(i) -= 0.5;
  const SurrogateOptions opt{0.2, 0.003, 0};
  const SurrogateResult joint = surrogate_gradient(trainer.policy(), all, opt);

  Eigen::VectorXd trunk = Eigen::VectorXd::Zero(joint.trunk_grad.size());
  Eigen::VectorXd ls = Eigen::VectorXd::Zero(joint.log_std_grad.size());
  const int n = 2;
  for (int agent = 0; agent < n; ++agent) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index c = agent; c < all.inputs.cols(); c += n) cols.push_back(c);
    PolicySamples part;
    const auto k = static_cast<Eigen::Index>(cols.size());
    part.inputs.resize(all.inputs.rows(), k);
    part.actions.resize(all.actions.rows(), k);
    part.old_log_probs.resize(k);
    part.advantages.resize(k);
    part.weights.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      part.inputs.col(i) = all.inputs.col(cols[i]);
      part.actions.col(i) = all.actions.col(cols[i]);
      part.old_log_probs(i) = all.old_log_probs(cols[i]);
      part.advantages(i) = all.advantages(cols[i]);
      part.weights(i) = all.weights(cols[i]);
      CHECK(part.inputs(trainer.policy().observation_size() + agent, i) == 1.0);
    }
    // Each agent carries its own entropy bonus.
    const SurrogateResult r = surrogate_gradient(trainer.policy(), part, {0.2, 0.003 / n, 0});
    trunk += r.trunk_grad;
    ls += r.log_std_grad;
  }
  CHECK((trunk - joint.trunk_grad).norm() <= 1e-12 * std::max(1.0, joint.trunk_grad.norm()));
  CHECK((ls - joint.log_std_grad).norm() <= 1e-12 * std::max(1.0, joint.log_std_grad.norm()));
}

TEST_CASE("schedules") {
  ScheduleConfig nominal;
  SUBCASE("nominal start values") {
    LearningRateSchedule lr(nominal);
    CHECK(lr.lr() == 3e-5);
    CHECK(entropy_coefficient(nominal, 0) == 0.003);
  }
  SUBCASE("entropy anneals linearly then holds") {
    CHECK(entropy_coefficient(nominal, 8'000'000) == 0.0008);
    CHECK(entropy_coefficient(nominal, 20'000'000) == 0.0008);
    CHECK(entropy_coefficient(nominal, 4'000'000) == doctest::Approx(0.0019).epsilon(1e-12));
    double prev = 1;
    for (long long s = 0; s <= 9'000'000; s += 250'000) {
      const double c = entropy_coefficient(nominal, s);
      CHECK(c <= prev);
      prev = c;
    }
  }
  SUBCASE("halving stops at the floor") {
    LearningRateSchedule lr(nominal);
    std::vector<double> seen{lr.lr()};
    for (int i = 0; i < 4; ++i) seen.push_back(lr.halve());
    const std::vector<double> expected{3e-5, 1.5e-5, 7.5e-6, 5e-6, 5e-6};
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(seen[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
  SUBCASE("plateau detection after the hold") {
    ScheduleConfig cfg = nominal;
    cfg.lr_hold_updates = 10;
    cfg.plateau_patience = 5;
    LearningRateSchedule lr(cfg);
    // Improving losses never trigger a halving.
    for (int i = 0; i < 30; ++i) lr.observe(10.0 - i);
    CHECK(lr.lr() == 3e-5);
    // A flat loss halves once per patience window.
    for (int i = 0; i < 5; ++i) lr.observe(100.0);
    CHECK(lr.lr() == doctest::Approx(1.5e-5));
    for (int i = 0; i < 5; ++i) lr.observe(100.0);
    CHECK(lr.lr() == doctest::Approx(7.5e-6));
  }
  SUBCASE("no halving during the hold") {
    LearningRateSchedule lr(nominal);
    for (int i = 0; i < 800; ++i) lr.observe(1.0);
    CHECK(lr.lr() == 3e-5);
    lr.observe(1.0);
    CHECK(lr.lr() == doctest::Approx(1.5e-5));
  }
}

TEST_CASE("trainer configuration is validated") {
  MappoConfig cfg = small_config();
  cfg.clip = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = small_config();
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = small_config();
  cfg.schedule.entropy_end = 0.01;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
}
