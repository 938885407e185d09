// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLUIDMARL_POLICY_HPP_
#define FLUIDMARL_POLICY_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fluidmarl/mlp.hpp"
#include "fluidmarl/rng.hpp"

namespace fluidmarl {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct NetworkShape {
  int hidden_width = 256;
  int hidden_layers = 3;
};

// Shared actor. The input is [observation, one-hot agent id]; the output is
// the mean of a diagonal Gaussian with a state-independent log-std.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(int observation_size, int num_agents, int action_size, NetworkShape shape = {});

  template <typename Urbg>
  void initialize(Urbg& rng, double initial_log_std = -0.5, double output_scale = 0.01) {
    trunk_.initialize(rng, output_scale);
    log_std_.setConstant(initial_log_std);
  }

  // obs: d_o x B, agents: B agent indices. Returns (d_o + N) x B.
  Eigen::MatrixXd make_input(const Eigen::MatrixXd& obs, const std::vector<int>& agents) const;
  // One column per agent, agent i in column i.
  Eigen::MatrixXd make_input(const Eigen::MatrixXd& obs) const;

  Eigen::MatrixXd mean(const Eigen::MatrixXd& input) const { return trunk_.forward(input); }
  // Clamped log-std actually used by the distribution.
  Eigen::VectorXd log_std() const;

  int observation_size() const { return observation_size_; }
  int num_agents() const { return num_agents_; }
  int action_size() const { return action_size_; }

  Mlp<double>& trunk() { return trunk_; }
  const Mlp<double>& trunk() const { return trunk_; }
  Eigen::VectorXd& raw_log_std() { return log_std_; }
  const Eigen::VectorXd& raw_log_std() const { return log_std_; }

 private:
  int observation_size_ = 0;
  int num_agents_ = 0;
  int action_size_ = 0;
  Mlp<double> trunk_;
  Eigen::VectorXd log_std_;
};

struct ActorOutput {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;
};

ActorOutput actor_forward(const GaussianPolicy& policy, const Eigen::VectorXd& obs, int agent);

// Column-wise diagonal-Gaussian log density.
Eigen::VectorXd gaussian_log_prob(const Eigen::MatrixXd& actions, const Eigen::MatrixXd& mean,
                                  const Eigen::VectorXd& log_std);

struct SampledAction {
  Eigen::VectorXd action;
  double log_prob = 0;
};

SampledAction sample_action(Rng& rng, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std);

// Samples every column of `mean` at once; returns actions and log-probs.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> sample_actions(Rng& rng, const Eigen::MatrixXd& mean,
                                                           const Eigen::VectorXd& log_std);

double policy_entropy(const Eigen::VectorXd& log_std);

class Critic {
 public:
  Critic() = default;
  Critic(int state_size, NetworkShape shape = {});

  template <typename Urbg>
  void initialize(Urbg& rng) {
    net_.initialize(rng, 1.0);
  }

  // states: d_s x B. Every call bumps critic_forward_calls().
  Eigen::VectorXd forward(const Eigen::MatrixXd& states) const;
  Eigen::VectorXd forward(const Eigen::MatrixXd& states, Mlp<double>::Tape& tape) const;

  Mlp<double>& net() { return net_; }
  const Mlp<double>& net() const { return net_; }

 private:
  Mlp<double> net_;
};

double critic_forward(const Critic& critic, const Eigen::VectorXd& state);

// Process-wide count of critic evaluations, used to prove code paths never
// touch the critic.
std::uint64_t critic_forward_calls();

// Mean squared error against `targets` and its gradient; returns the loss.
double critic_mse_gradient(const Critic& critic, const Eigen::MatrixXd& states, const Eigen::VectorXd& targets,
                           Eigen::VectorXd& grad);

// ---------------------------------------------------------------------------
// Clipped-surrogate objective shared by both trainers.

double clipped_surrogate(double ratio, double advantage, double epsilon);

// KL(pi_ref || pi) estimate r - ln r - 1 with r = pi_ref / pi.
double kl_approx(double logp_ref, double logp_cur);

struct PolicySamples {
  Eigen::MatrixXd inputs;         // (d_o + N) x S
  Eigen::MatrixXd actions;        // d_a x S
  Eigen::VectorXd old_log_probs;  // S
  Eigen::VectorXd advantages;     // S
  Eigen::VectorXd weights;        // S, per-sample weight in the objective
  std::optional<Eigen::VectorXd> ref_log_probs;
};

struct SurrogateOptions {
  double clip = 0.2;
  double entropy_weight = 0;  // multiplies the policy entropy
  double kl_coef = 0;         // only used when ref_log_probs is set
};

struct SurrogateResult {
  double objective = 0;  // weighted surrogate - kl_coef * kl + entropy_weight * H
  double surrogate = 0;
  double kl = 0;  // weighted mean
  double entropy = 0;
  double mean_ratio = 0;
  double clip_fraction = 0;
  Eigen::VectorXd ratios;
  // Gradients of the loss (= -objective).
  Eigen::VectorXd trunk_grad;
  Eigen::VectorXd log_std_grad;
};

SurrogateResult surrogate_gradient(const GaussianPolicy& policy, const PolicySamples& samples,
                                   const SurrogateOptions& options);

// ---------------------------------------------------------------------------
// Checkpoints: magic, u32 version, phase tag, then named parameter blocks
// with their layer shapes. All numbers little-endian; parameters as f64.

struct ParameterBlock {
  std::string name;
  std::vector<int> shape;
  Eigen::VectorXd values;
};

struct Checkpoint {
  std::string phase;
  std::vector<ParameterBlock> blocks;

  const ParameterBlock& block(const std::string& name) const;
  bool has(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void store_policy(Checkpoint& checkpoint, const GaussianPolicy& policy);
void store_critic(Checkpoint& checkpoint, const Critic& critic);
// Throws ShapeMismatch if the checkpoint shapes differ from `policy`.
void restore_policy(const Checkpoint& checkpoint, GaussianPolicy& policy);
void restore_critic(const Checkpoint& checkpoint, Critic& critic);

}  // namespace fluidmarl

#endif  // FLUIDMARL_POLICY_HPP_
