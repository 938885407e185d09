// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

// Critic-free multi-agent group-relative policy optimization: a MAPPO
// warm-up produces a frozen reference policy, after which every update uses
// G independent trajectories, a per-trajectory standardized return as the
// advantage of all its steps, and a KL penalty toward the reference.

#ifndef FLUIDMARL_MAGRPO_HPP_
#define FLUIDMARL_MAGRPO_HPP_

#include <cstdint>
#include <optional>

#include "fluidmarl/mappo.hpp"

namespace fluidmarl {

struct MagrpoConfig {
  MappoConfig warmup;              // horizon, network shape and schedules are shared
  long long total_steps = 300000;  // T_max
  long long reference_steps = -1;  // T_ref; negative means total_steps / 8
  int group_size = 16;             // G
  double clip = 0.2;               // epsilon_2
  double kl_coef = 1e-4;           // mu
  int epochs = 5;

  long long effective_reference_steps() const { return reference_steps < 0 ? total_steps / 8 : reference_steps; }
  void validate() const;
};

class MagrpoTrainer {
 public:
  MagrpoTrainer(NetworkConfig network, StepOptions options, MagrpoConfig cfg, std::uint64_t seed);

  // One warm-up MAPPO batch, or one group update once warm-up is over.
  UpdateMetrics iterate();
  void train();
  bool done() const;
  bool in_warmup() const { return !reference_.has_value(); }

  // G trajectories, or fewer (at least two) when the step budget runs out.
  TrajectoryBatch collect_group();
  UpdateMetrics update(const TrajectoryBatch& group);

  // ceil(T_ref / T) * T
  long long warmup_steps() const;
  long long steps() const { return mappo_.steps(); }

  GaussianPolicy& policy() { return mappo_.policy(); }
  const GaussianPolicy& policy() const { return mappo_.policy(); }
  const GaussianPolicy& reference() const;
  MappoTrainer& warmup_trainer() { return mappo_; }
  const MagrpoConfig& config() const { return cfg_; }

  // Per-sample advantages of the last update, in sample order
  // (trajectory, step, agent).
  const Eigen::VectorXd& last_sample_advantages() const { return last_advantages_; }

  Checkpoint checkpoint() const;

 private:
  void finish_warmup();

  MagrpoConfig cfg_;
  MappoTrainer mappo_;
  std::optional<GaussianPolicy> reference_;
  long long updates_ = 0;
  Eigen::VectorXd last_advantages_;
};

enum class Algorithm { kMappo, kMagrpo };

// Multiply-accumulate count of one forward pass through the networks used
// by an update, for hidden width J and J_hidden hidden-to-hidden layers:
//   MAPPO:  J (d_s + d_o + d_a) + J + 2 J^2 J_hidden
//   MAGRPO: J d_o + J d_a + J^2 J_hidden + G
double count_update_flops(Algorithm algorithm, double width, double d_s, double d_o, double d_a, double group_size,
                          double hidden_layers);

}  // namespace fluidmarl

#endif  // FLUIDMARL_MAGRPO_HPP_
