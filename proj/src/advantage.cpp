// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include "fluidmarl/advantage.hpp"

#include <algorithm>
#include <cmath>

#include "fluidmarl/common.hpp"

namespace fluidmarl {

Eigen::VectorXd gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, double gamma, double lambda) {
  const Eigen::Index t_len = rewards.size();
  if (values.size() != t_len + 1)
    throw ShapeMismatch("gae: expected " + std::to_string(t_len + 1) + " values, got " +
                        std::to_string(values.size()));
  if (gamma < 0 || gamma > 1 || lambda < 0 || lambda > 1)
    throw InvalidConfig("gae: discount and lambda must lie in [0, 1]");
  Eigen::VectorXd adv(t_len);
  double running = 0;
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    const double delta = rewards(t) + gamma * values(t + 1) - values(t);
    running = delta + gamma * lambda * running;
    adv(t) = running;
  }
  return adv;
}

Eigen::VectorXd bootstrapped_targets(const Eigen::VectorXd& advantages, const Eigen::VectorXd& old_values) {
  if (advantages.size() != old_values.size()) throw ShapeMismatch("bootstrapped_targets: lengths differ");
  return advantages + old_values;
}

NormalizedBatch normalize_batch(const Eigen::VectorXd& values) {
  if (values.size() < 2) throw InvalidConfig("normalize_batch: need at least two values");
  NormalizedBatch out;
  out.mean = values.mean();
  out.std_dev = std::sqrt((values.array() - out.mean).square().mean());
  out.values = (values.array() - out.mean) / std::max(out.std_dev, kStdGuard);
  return out;
}

Eigen::VectorXd group_relative_advantage(const Eigen::VectorXd& returns) {
  if (returns.size() < 2) throw InvalidConfig("group_relative_advantage: group size must be at least 2");
  return normalize_batch(returns).values;
}

}  // namespace fluidmarl
