// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "fluidmarl/policy.hpp"

using namespace fluidmarl;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Forward pass with explicit loops over the flat parameter layout: per layer
// the out x in weights column by column, then the biases.
Eigen::VectorXd dense_oracle(const std::vector<int>& sizes, const Eigen::VectorXd& p, const Eigen::VectorXd& x) {
  std::vector<double> a(x.data(), x.data() + x.size());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    std::vector<double> z(static_cast<std::size_t>(out), 0.0);
    for (int r = 0; r < out; ++r) {
      double acc = 0;
      for (int c = 0; c < in; ++c) acc += p(off + c * out + r) * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = acc + p(off + Eigen::Index(in) * out + r);
    }
    off += Eigen::Index(out) * (in + 1);
    if (l + 2 < sizes.size())
      for (double& v : z) v = std::max(v, 0.0);
    a = std::move(z);
  }
  return Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

}  // namespace

TEST_CASE("actor forward") {
  GaussianPolicy policy(5, 3, 4, {8, 2});
  SUBCASE("zero parameters give a zero mean") {
    const ActorOutput o = actor_forward(policy, Eigen::VectorXd::Ones(5), 1);
    CHECK(o.mean == Eigen::VectorXd::Zero(4));
    CHECK(o.log_std.size() == 4);
  }
  SUBCASE("input is the observation followed by the agent one-hot") {
    const Eigen::MatrixXd in = policy.make_input(Eigen::MatrixXd::Constant(5, 1, 2.0), {2});
    Eigen::VectorXd expected(8);
    expected << 2, 2, 2, 2, 2, 0, 0, 1;
    CHECK(in.col(0) == expected);
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(actor_forward(policy, Eigen::VectorXd::Ones(4), 0), ShapeMismatch);
    CHECK_THROWS_AS(actor_forward(policy, Eigen::VectorXd::Ones(5), 3), ShapeMismatch);
  }
  SUBCASE("bit-for-bit reproducible") {
    Rng rng(1);
    policy.initialize(rng, -0.5, 1.0);
    const Eigen::VectorXd obs = random_matrix(rng, 5, 1);
    const ActorOutput a = actor_forward(policy, obs, 0);
    const ActorOutput b = actor_forward(policy, obs, 0);
    CHECK(std::memcmp(a.mean.data(), b.mean.data(), sizeof(double) * 4) == 0);
  }
  SUBCASE("agent identity matters once trained on agent-asymmetric data") {
    Rng rng(2);
    policy.initialize(rng, -0.5, 1.0);
    auto w0 = policy.trunk().weight(0);
    w0.rightCols(3).setZero();  // blind to the one-hot at first
    const Eigen::VectorXd obs = random_matrix(rng, 5, 1);
    CHECK(actor_forward(policy, obs, 0).mean == actor_forward(policy, obs, 1).mean);

    PolicySamples s;
    s.inputs = policy.make_input(Eigen::MatrixXd(obs.replicate(1, 2)), {0, 1});
    const Eigen::MatrixXd mean = policy.mean(s.inputs);
    s.actions = mean.array() + 0.3;
    s.old_log_probs = gaussian_log_prob(s.actions, mean, policy.log_std());
    s.advantages = Eigen::Vector2d(1.0, -1.0);
    s.weights = Eigen::Vector2d(0.5, 0.5);
    const SurrogateResult r = surrogate_gradient(policy, s, {});
    Adam<double> opt(policy.trunk().num_parameters(), 1e-2);
    opt.update(policy.trunk().parameters(), r.trunk_grad);
    CHECK(actor_forward(policy, obs, 0).mean != actor_forward(policy, obs, 1).mean);
  }
}

TEST_CASE("action sampling") {
  Rng rng(3);
  SUBCASE("the clamped minimum std leaves the mean almost untouched") {
    const int d = 14;
    const Eigen::VectorXd mean = random_matrix(rng, d, 1);
    GaussianPolicy p(1, 1, d);
    p.raw_log_std().setConstant(-50);
    CHECK(p.log_std() == Eigen::VectorXd::Constant(d, kLogStdMin));
    for (int t = 0; t < 100; ++t) {
      const SampledAction a = sample_action(rng, mean, p.log_std());
      CHECK((a.action - mean).norm() <= 0.05 * std::sqrt(double(d)));
    }
  }
  SUBCASE("density at the mode") {
    const Eigen::Vector3d ls(-0.2, 0.4, 1.0);
    const Eigen::Vector3d mu(1, 2, 3);
    const double expected = -ls.sum() - 1.5 * std::log(2 * M_PI);
    CHECK(gaussian_log_prob(mu, mu, ls)(0) == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("returned log-prob is the density of the returned action") {
    const Eigen::Vector3d ls(-0.2, 0.4, 1.0);
    const Eigen::Vector3d mu(1, 2, 3);
    for (int t = 0; t < 20; ++t) {
      const SampledAction a = sample_action(rng, mu, ls);
      double ref = 0;
      for (int d = 0; d < 3; ++d) {
        const double s = std::exp(ls(d));
        ref += -0.5 * std::pow((a.action(d) - mu(d)) / s, 2) - std::log(s) - 0.5 * std::log(2 * M_PI);
      }
      CHECK(a.log_prob == doctest::Approx(ref).epsilon(1e-12));
    }
  }
  SUBCASE("empirical std matches exp(log_std) within 2%") {
    const Eigen::Vector3d ls(-1.0, 0.0, 0.8);
    const int n = 100000;
    const auto [actions, lp] = sample_actions(rng, Eigen::MatrixXd::Zero(3, n), ls);
    for (int d = 0; d < 3; ++d) {
      const double m = actions.row(d).mean();
      const double sd = std::sqrt((actions.row(d).array() - m).square().sum() / (n - 1));
      CHECK(std::abs(sd / std::exp(ls(d)) - 1) < 0.02);
    }
  }
  SUBCASE("negative mean log-prob of fresh samples matches the entropy within 1%") {
    const Eigen::VectorXd ls = Eigen::VectorXd::Constant(14, -0.5);
    const auto [actions, lp] = sample_actions(rng, Eigen::MatrixXd::Zero(14, 100000), ls);
    CHECK(std::abs(-lp.mean() / policy_entropy(ls) - 1) < 0.01);
  }
}

TEST_CASE("entropy") {
  CHECK(policy_entropy(Eigen::VectorXd::Zero(1)) == doctest::Approx(1.4189385332).epsilon(1e-9));
  Eigen::VectorXd ls = Eigen::VectorXd::Constant(4, 0.1);
  double prev = policy_entropy(ls);
  for (int d = 0; d < 4; ++d) {
    ls(d) += 0.3;
    const double h = policy_entropy(ls);
    CHECK(h > prev);
    prev = h;
  }
  // Composite Simpson over +-20 sigma of -p log p.
  for (double l : {-1.5, 0.0, 0.7}) {
    const double s = std::exp(l);
    const int n = 40000;
    const double a = -20 * s;
    const double h = 40 * s / n;
    auto f = [&](double x) {
      const double logp = -0.5 * x * x / (s * s) - std::log(s) - 0.5 * std::log(2 * M_PI);
      return -std::exp(logp) * logp;
    };
    double acc = f(a) + f(-a);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4 : 2) * f(a + i * h);
    CHECK(std::abs(acc * h / 3 - policy_entropy(Eigen::VectorXd::Constant(1, l))) < 1e-6);
  }
}

TEST_CASE("critic forward") {
  Critic critic(7, {16, 3});
  CHECK(critic_forward(critic, Eigen::VectorXd::Ones(7)) == 0.0);
  CHECK_THROWS_AS(critic_forward(critic, Eigen::VectorXd::Ones(6)), ShapeMismatch);
  Rng rng(4);
  critic.initialize(rng);
  std::uniform_real_distribution<double> big(-1e3, 1e3);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd x(7);
    for (auto& v : x) v = big(rng);
    const double y = critic_forward(critic, x);
    CHECK(std::isfinite(y));
    const double ref = dense_oracle(critic.net().sizes(), critic.net().parameters(), x)(0);
    CHECK(std::abs(y - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
  }
  const auto before = critic_forward_calls();
  critic.forward(Eigen::MatrixXd::Zero(7, 3));
  CHECK(critic_forward_calls() == before + 1);
}

TEST_CASE("gradients") {
  SUBCASE("log-prob gradient through the actor matches finite differences") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
      const int d_o = 2 + t % 4;
      const int agents = 1 + t % 3;
      const int d_a = 1 + t % 5;
      GaussianPolicy policy(d_o, agents, d_a, {4 + t % 13, 1 + t % 3});
      policy.initialize(rng, -0.3, 1.0);
      PolicySamples s;
      s.inputs = policy.make_input(random_matrix(rng, d_o, 1), {t % agents});
      const Eigen::MatrixXd mean = policy.mean(s.inputs);
      s.actions = mean + random_matrix(rng, d_a, 1);
      s.old_log_probs = gaussian_log_prob(s.actions, mean, policy.log_std());
      s.advantages = Eigen::VectorXd::Ones(1);
      s.weights = Eigen::VectorXd::Ones(1);
      // At ratio 1 the surrogate gradient is -d logp / d theta.
      const SurrogateResult r = surrogate_gradient(policy, s, {1e6});

      Eigen::VectorXd& p = policy.trunk().parameters();
      Eigen::VectorXd fd(p.size());
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double keep = p(i);
        p(i) = keep + h;
        const double up = gaussian_log_prob(s.actions, policy.mean(s.inputs), policy.log_std())(0);
        p(i) = keep - h;
        const double down = gaussian_log_prob(s.actions, policy.mean(s.inputs), policy.log_std())(0);
        p(i) = keep;
        fd(i) = -(up - down) / (2 * h);
      }
      CHECK(relative_error(r.trunk_grad, fd) < 1e-4);
    }
  }
  SUBCASE("full surrogate loss gradient matches finite differences") {
    Rng rng(6);
    std::uniform_real_distribution<double> unit(0, 1);
    for (int t = 0; t < 50; ++t) {
      const int d_o = 3;
      const int agents = 2;
      const int d_a = 2 + t % 3;
      const int n = 6;
      GaussianPolicy policy(d_o, agents, d_a, {6 + t % 11, 1 + t % 2});
      policy.initialize(rng, -0.4, 1.0);
      policy.raw_log_std() += random_matrix(rng, d_a, 1, 0.2);
      PolicySamples s;
      std::vector<int> ids(n);
      for (int i = 0; i < n; ++i) ids[i] = i % agents;
      s.inputs = policy.make_input(random_matrix(rng, d_o, n), ids);
      const Eigen::MatrixXd mean = policy.mean(s.inputs);
      s.actions = mean + random_matrix(rng, d_a, n, 0.7);
      const Eigen::VectorXd logp = gaussian_log_prob(s.actions, mean, policy.log_std());
      // Ratios either well inside the trust region or well outside it, so
      // the finite differences never straddle a clipping kink.
      s.old_log_probs.resize(n);
      for (int i = 0; i < n; ++i) {
        const double shift = unit(rng) < 0.5 ? 0.05 * (unit(rng) - 0.5) : (unit(rng) < 0.5 ? 0.6 : -0.6);
        s.old_log_probs(i) = logp(i) - shift;
      }
      s.advantages = random_matrix(rng, n, 1);
      s.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
      s.ref_log_probs = logp + random_matrix(rng, n, 1, 0.1);
      const SurrogateOptions opt{0.2, 0.01, 0.05};
      const SurrogateResult r = surrogate_gradient(policy, s, opt);

      auto loss = [&] { return -surrogate_gradient(policy, s, opt).objective; };
      const double h = 1e-6;
      Eigen::VectorXd& p = policy.trunk().parameters();
      Eigen::VectorXd fd(p.size());
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double keep = p(i);
        p(i) = keep + h;
        const double up = loss();
        p(i) = keep - h;
        const double down = loss();
        p(i) = keep;
        fd(i) = (up - down) / (2 * h);
      }
      CHECK(relative_error(r.trunk_grad, fd) < 1e-4);
      Eigen::VectorXd& ls = policy.raw_log_std();
      Eigen::VectorXd fd_ls(ls.size());
      for (Eigen::Index i = 0; i < ls.size(); ++i) {
        const double keep = ls(i);
        ls(i) = keep + h;
        const double up = loss();
        ls(i) = keep - h;
        const double down = loss();
        ls(i) = keep;
        fd_ls(i) = (up - down) / (2 * h);
      }
      CHECK(relative_error(r.log_std_grad, fd_ls) < 1e-4);
    }
  }
  SUBCASE("critic MSE gradient matches finite differences") {
    Rng rng(7);
    for (int t = 0; t < 50; ++t) {
      Critic critic(4 + t % 5, {3 + t % 14, 1 + t % 3});
      critic.initialize(rng);
      const Eigen::MatrixXd states = random_matrix(rng, 4 + t % 5, 5);
      const Eigen::VectorXd targets = random_matrix(rng, 5, 1);
      Eigen::VectorXd grad;
      critic_mse_gradient(critic, states, targets, grad);
      Eigen::VectorXd& p = critic.net().parameters();
      Eigen::VectorXd fd(p.size());
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double keep = p(i);
        p(i) = keep + h;
        const double up = (critic.forward(states) - targets).squaredNorm() / 5;
        p(i) = keep - h;
        const double down = (critic.forward(states) - targets).squaredNorm() / 5;
        p(i) = keep;
        fd(i) = (up - down) / (2 * h);
      }
      CHECK(relative_error(grad, fd) < 1e-4);
    }
  }
  SUBCASE("a loss that does not depend on the parameters has zero gradient") {
    Rng rng(8);
    GaussianPolicy policy(3, 2, 2, {8, 2});
    policy.initialize(rng);
    PolicySamples s;
    s.inputs = policy.make_input(random_matrix(rng, 3, 4), {0, 1, 0, 1});
    s.actions = random_matrix(rng, 2, 4);
    s.old_log_probs = random_matrix(rng, 4, 1);
    s.advantages = Eigen::VectorXd::Zero(4);
    s.weights = Eigen::VectorXd::Ones(4);
    const SurrogateResult r = surrogate_gradient(policy, s, {});
    CHECK(r.trunk_grad.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.log_std_grad.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("one-hidden-layer critic against the hand-derived gradient") {
    Rng rng(9);
    Critic critic(3, {4, 1});
    critic.initialize(rng);
    const Eigen::Vector3d x(0.3, -1.2, 0.8);
    const double target = 0.4;
    Eigen::VectorXd grad;
    critic_mse_gradient(critic, x, Eigen::VectorXd::Constant(1, target), grad);

    const Mlp<double>& net = critic.net();
    const Eigen::MatrixXd w1 = net.weight(0);
    const Eigen::VectorXd b1 = net.bias(0);
    const Eigen::RowVectorXd w2 = net.weight(1);
    const double b2 = net.bias(1)(0);
    const Eigen::VectorXd z = w1 * x + b1;
    const Eigen::VectorXd hid = z.cwiseMax(0.0);
    const double e = 2 * (w2.dot(hid) + b2 - target);
    const Eigen::VectorXd back = (w2.transpose().array() * (z.array() > 0).cast<double>()).matrix() * e;
    Eigen::VectorXd expected(grad.size());
    const Eigen::MatrixXd gw1 = back * x.transpose();
    expected << Eigen::Map<const Eigen::VectorXd>(gw1.data(), 12), back, hid * e, e;
    CHECK((grad - expected).norm() < 1e-12);
  }
}

TEST_CASE("Adam") {
  SUBCASE("zero gradients leave parameters alone") {
    Adam<double> opt(3, 0.1);
    Eigen::VectorXd p(3);
    p << 1, 2, 3;
    for (int i = 0; i < 5; ++i) opt.update(p, Eigen::VectorXd::Zero(3));
    CHECK(p == Eigen::Vector3d(1, 2, 3));
  }
  SUBCASE("first step moves by the learning rate") {
    Adam<double> opt(1, 0.1);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
    opt.update(p, Eigen::VectorXd::Ones(1));
    CHECK(p(0) == doctest::Approx(-0.1).epsilon(1e-6));
  }
  SUBCASE("ten steps against a scripted reference") {
    Rng rng(10);
    Adam<double> opt(4, 0.05);
    Eigen::VectorXd p = random_matrix(rng, 4, 1);
    double ref[4];
    double m[4] = {0, 0, 0, 0};
    double v[4] = {0, 0, 0, 0};
    for (int i = 0; i < 4; ++i) ref[i] = p(i);
    for (int t = 1; t <= 10; ++t) {
      const Eigen::VectorXd g = random_matrix(rng, 4, 1);
      opt.update(p, g);
      for (int i = 0; i < 4; ++i) {
        m[i] = 0.9 * m[i] + 0.1 * g(i);
        v[i] = 0.999 * v[i] + 0.001 * g(i) * g(i);
        const double mh = m[i] / (1 - std::pow(0.9, t));
        const double vh = v[i] / (1 - std::pow(0.999, t));
        ref[i] -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
      }
    }
    for (int i = 0; i < 4; ++i) CHECK(std::abs(p(i) - ref[i]) < 1e-10);
    CHECK(opt.step == 10);
  }
}

TEST_CASE("shared actor size depends on N only through the one-hot width") {
  const int width = 64;
  const Eigen::Index base = GaussianPolicy(32, 1, 14, {width, 3}).trunk().num_parameters();
  for (int n = 2; n <= 6; ++n)
    CHECK(GaussianPolicy(32, n, 14, {width, 3}).trunk().num_parameters() == base + (n - 1) * width);
}

TEST_CASE("checkpoints") {
  const auto dir = std::filesystem::temp_directory_path() / "fluidmarl_test_policy";
  std::filesystem::create_directories(dir);
  Rng rng(11);
  GaussianPolicy policy(6, 2, 3, {16, 2});
  policy.initialize(rng, -0.7, 1.0);
  Critic critic(9, {16, 2});
  critic.initialize(rng);
  Checkpoint ck;
  ck.phase = "warmup";
  store_policy(ck, policy);
  store_critic(ck, critic);
  save_checkpoint(dir / "a.bin", ck);

  SUBCASE("round trip is bit-exact") {
    const Checkpoint loaded = load_checkpoint(dir / "a.bin");
    CHECK(loaded.phase == "warmup");
    GaussianPolicy p2(6, 2, 3, {16, 2});
    Critic c2(9, {16, 2});
    restore_policy(loaded, p2);
    restore_critic(loaded, c2);
    const auto& a = policy.trunk().parameters();
    const auto& b = p2.trunk().parameters();
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
    CHECK(std::memcmp(policy.raw_log_std().data(), p2.raw_log_std().data(), sizeof(double) * 3) == 0);
    CHECK(std::memcmp(critic.net().parameters().data(), c2.net().parameters().data(),
                      sizeof(double) * critic.net().num_parameters()) == 0);
  }
  SUBCASE("mismatched architecture is refused") {
    const Checkpoint loaded = load_checkpoint(dir / "a.bin");
    GaussianPolicy wide(6, 2, 3, {32, 2});
    CHECK_THROWS_AS(restore_policy(loaded, wide), ShapeMismatch);
    GaussianPolicy more_agents(6, 3, 3, {16, 2});
    CHECK_THROWS_AS(restore_policy(loaded, more_agents), ShapeMismatch);
  }
  SUBCASE("foreign files are rejected") {
    std::ofstream(dir / "junk.bin") << "not a checkpoint at all";
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.bin"), Error);
  }
  std::filesystem::remove_all(dir);
}
