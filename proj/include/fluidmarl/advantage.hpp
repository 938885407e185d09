// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLUIDMARL_ADVANTAGE_HPP_
#define FLUIDMARL_ADVANTAGE_HPP_

#include <Eigen/Dense>

namespace fluidmarl {

inline constexpr double kStdGuard = 1e-8;

// Generalized advantage estimation by backward recursion. `values` holds
// T + 1 entries; values[T] is the bootstrap value after the last step.
Eigen::VectorXd gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, double gamma, double lambda);

// R_hat = A + V_old.
Eigen::VectorXd bootstrapped_targets(const Eigen::VectorXd& advantages, const Eigen::VectorXd& old_values);

struct NormalizedBatch {
  Eigen::VectorXd values;
  double mean = 0;
  double std_dev = 0;  // population
};

// (x - mean) / max(std, 1e-8) with the population std. Needs at least two
// entries; a constant batch maps to zeros.
NormalizedBatch normalize_batch(const Eigen::VectorXd& values);

// Group-relative advantage of G >= 2 trajectory returns; same convention
// as normalize_batch.
Eigen::VectorXd group_relative_advantage(const Eigen::VectorXd& returns);

}  // namespace fluidmarl

#endif  // FLUIDMARL_ADVANTAGE_HPP_
