// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "fluidmarl/advantage.hpp"
#include "fluidmarl/common.hpp"

using namespace fluidmarl;

namespace {

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0, 1);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

// A_t = sum_{l >= 0} (gamma lambda)^l delta_{t+l}, summed directly.
Eigen::VectorXd gae_double_sum(const Eigen::VectorXd& r, const Eigen::VectorXd& v, double gamma, double lambda) {
  const Eigen::Index t_len = r.size();
  Eigen::VectorXd out(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    double acc = 0;
    for (Eigen::Index l = 0; t + l < t_len; ++l) {
      const Eigen::Index s = t + l;
      const double delta = r(s) + gamma * v(s + 1) - v(s);
      acc += std::pow(gamma * lambda, static_cast<double>(l)) * delta;
    }
    out(t) = acc;
  }
  return out;
}

double population_std(const Eigen::VectorXd& x) {
  const double m = x.mean();
  return std::sqrt((x.array() - m).square().mean());
}

}  // namespace

TEST_CASE("GAE") {
  std::mt19937_64 rng(1);
  SUBCASE("lambda = 0 gives one-step TD errors") {
    const Eigen::VectorXd r = random_vector(rng, 6);
    const Eigen::VectorXd v = random_vector(rng, 7);
    const Eigen::VectorXd a = gae(r, v, 0.9, 0.0);
    for (int t = 0; t < 6; ++t) CHECK(a(t) == doctest::Approx(r(t) + 0.9 * v(t + 1) - v(t)).epsilon(1e-15));
  }
  SUBCASE("lambda = 1 with zero values gives discounted returns") {
    const Eigen::VectorXd r = random_vector(rng, 6);
    const Eigen::VectorXd a = gae(r, Eigen::VectorXd::Zero(7), 0.9, 1.0);
    for (int t = 0; t < 6; ++t) {
      double g = 0;
      for (int l = 0; t + l < 6; ++l) g += std::pow(0.9, l) * r(t + l);
      CHECK(std::abs(a(t) - g) < 1e-12);
    }
  }
  SUBCASE("random instances against the double sum") {
    std::uniform_real_distribution<double> unit(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd r = random_vector(rng, 7);
      Eigen::VectorXd v = random_vector(rng, 8);
      if (trial % 2) v(7) = 0;
      const double gamma = unit(rng);
      const double lambda = unit(rng);
      CHECK((gae(r, v, gamma, lambda) - gae_double_sum(r, v, gamma, lambda)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("linear in rewards when values are zero") {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(8);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::VectorXd r1 = random_vector(rng, 7);
      const Eigen::VectorXd r2 = random_vector(rng, 7);
      const Eigen::VectorXd ab = random_vector(rng, 2);
      const Eigen::VectorXd lhs = gae(ab(0) * r1 + ab(1) * r2, zero, 0.99, 0.95);
      const Eigen::VectorXd rhs = ab(0) * gae(r1, zero, 0.99, 0.95) + ab(1) * gae(r2, zero, 0.99, 0.95);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(gae(Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(5), 0.9, 0.9), ShapeMismatch);
    CHECK_THROWS_AS(gae(Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(6), 1.1, 0.9), InvalidConfig);
  }
}

TEST_CASE("bootstrapped targets") {
  std::mt19937_64 rng(2);
  const Eigen::VectorXd v = random_vector(rng, 5);
  const Eigen::VectorXd a = random_vector(rng, 5);
  CHECK(bootstrapped_targets(Eigen::VectorXd::Zero(5), v) == v);
  CHECK((bootstrapped_targets(3.0 * a, v) - bootstrapped_targets(Eigen::VectorXd::Zero(5), v) - 3.0 * a).norm() <
        1e-12);
  CHECK((v - bootstrapped_targets(a, v) + a).norm() < 1e-12);
  CHECK_THROWS_AS(bootstrapped_targets(a, Eigen::VectorXd::Zero(4)), ShapeMismatch);
}

TEST_CASE("batch normalization") {
  const NormalizedBatch b = normalize_batch(Eigen::Vector3d(1, 2, 3));
  CHECK(b.values(0) == doctest::Approx(-1.2247449).epsilon(1e-7));
  CHECK(b.values(1) == doctest::Approx(0.0));
  CHECK(b.values(2) == doctest::Approx(1.2247449).epsilon(1e-7));
  CHECK(b.std_dev == doctest::Approx(std::sqrt(2.0 / 3)).epsilon(1e-14));
  CHECK(normalize_batch(Eigen::VectorXd::Constant(6, 4.2)).values.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(normalize_batch(Eigen::VectorXd::Constant(6, 4.2)).values.allFinite());
  // Unit-scale batches, where an additive guard would cost 1e-8 of spread.
  std::mt19937_64 unit_rng(5);
  for (int trial = 0; trial < 20; ++trial)
    CHECK(std::abs(population_std(normalize_batch(random_vector(unit_rng, 16)).values) - 1) < 1e-9);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = 5.0 * random_vector(rng, 64).array() + 2.0;
    const Eigen::VectorXd y = normalize_batch(x).values;
    CHECK(std::abs(y.mean()) < 1e-9);
    CHECK(std::abs(population_std(y) - 1) < 1e-9);
    // Within 1e-8 relative of dividing by std + 1e-8.
    const double sigma = population_std(x);
    const Eigen::VectorXd additive = (x.array() - x.mean()) / (sigma + 1e-8);
    CHECK((y - additive).cwiseAbs().maxCoeff() <= 1e-8 * y.cwiseAbs().maxCoeff());
  }
  CHECK_THROWS_AS(normalize_batch(Eigen::VectorXd::Ones(1)), InvalidConfig);
}

TEST_CASE("group-relative advantage") {
  const Eigen::VectorXd a = group_relative_advantage(Eigen::Vector3d(1, 2, 3));
  CHECK(a(0) == doctest::Approx(-1.2247449).epsilon(1e-7));
  CHECK(a(2) == doctest::Approx(1.2247449).epsilon(1e-7));
  CHECK(group_relative_advantage(Eigen::VectorXd::Constant(8, -3.0)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_THROWS_AS(group_relative_advantage(Eigen::VectorXd::Ones(1)), InvalidConfig);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd r = random_vector(rng, 16);
    const Eigen::VectorXd g = group_relative_advantage(r);
    CHECK(std::abs(g.mean()) < 1e-9);
    CHECK(std::abs(population_std(g) - 1) < 1e-9);

    // Shift invariance.
    CHECK((group_relative_advantage(r.array() + 17.5) - g).cwiseAbs().maxCoeff() < 1e-9);

    // Without the guard the map is exactly scale invariant.
    auto unguarded = [](const Eigen::VectorXd& x) {
      return Eigen::VectorXd((x.array() - x.mean()) / population_std(x));
    };
    CHECK((unguarded(3.7 * r) - unguarded(r)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((unguarded(r) - g).cwiseAbs().maxCoeff() < 1e-12);

    // Order preserving.
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j)
        if (r(i) < r(j)) CHECK(g(i) < g(j));
  }
}
