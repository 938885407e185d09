// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

// Multi-cell downlink with fluid-antenna base stations, exposed as a
// decentralized POMDP: N agents (BSs), a shared network-wide reward, and
// local observations.
//
// Within an episode the user drops and path geometry are fixed; only the FA
// positions and beamformers chosen by the agents change the channels.

#ifndef FLUIDMARL_ENV_HPP_
#define FLUIDMARL_ENV_HPP_

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "fluidmarl/channel.hpp"
#include "fluidmarl/config.hpp"
#include "fluidmarl/rng.hpp"

namespace fluidmarl {

Eigen::Index state_dimension(int num_bs, int num_users, int num_antennas);
Eigen::Index observation_dimension(int num_users, int num_antennas);
Eigen::Index action_dimension(int num_users, int num_antennas);

// Per-episode constants of one BS -> user link.
struct Link {
  ChannelGeometry<double> geometry;
  ComplexRowVector<double> coefficients;  // sqrt(large_scale) f^H(v) Sigma
  Positions3<double> departure;           // 3 x L AoD direction cosines
};

struct GlobalState {
  int num_bs = 0;
  int num_users = 0;
  int num_antennas = 0;

  std::vector<Positions3<double>> fa_positions;    // [i]: 3 x M, array-local
  std::vector<Eigen::MatrixXcd> beamformers;       // [i]: M x K, column k = w_i^[k]
  std::vector<Positions3<double>> user_positions;  // [i]: 3 x K, global
  std::vector<Eigen::Vector3d> bs_positions;       // [i]
  std::vector<Eigen::MatrixXcd> channels;          // [j * N + i]: K x M, row k = h_{j,i}^[k]
  Eigen::MatrixXd sinr;                            // N x K
  Eigen::MatrixXd rates;                           // N x K, bits/s/Hz
  std::vector<Link> links;                         // [(j * N + i) * K + k]

  // Channels from BS `from` to the users served by BS `cell`.
  const Eigen::MatrixXcd& channel(int from, int cell) const {
    return channels[static_cast<std::size_t>(from * num_bs + cell)];
  }
  const Link& link(int from, int cell, int user) const {
    return links[static_cast<std::size_t>((from * num_bs + cell) * num_users + user)];
  }
};

struct LocalObservation {
  Eigen::Vector3d bs_position;
  Positions3<double> fa_positions;    // 3 x M
  Eigen::MatrixXcd beamformers;       // M x K
  Positions3<double> user_positions;  // 3 x K
  Eigen::MatrixXcd channels;          // K x M, own-cell channels
  Eigen::VectorXd interference;       // K, inter-cell power |I_2|^2 in W
  Eigen::VectorXd rates;              // K
};

struct LocalAction {
  Positions3<double> fa_positions;  // 3 x M
  Eigen::MatrixXcd beamformers;     // M x K
};

// Fixed unit conversions between physical quantities and the real vectors
// the networks see. All constants derive from the NetworkConfig alone.
struct FeatureScaling {
  Eigen::Vector3d region_center;
  Eigen::Vector3d region_half_extent;  // zero extents replaced by 1
  double user_scale = 1;               // m
  double beam_unit = 1;                // sqrt(W) per real component
  double channel_unit = 1;
  double noise_power = 1;
  double rate_scale = 0.1;
};

FeatureScaling feature_scaling(const NetworkConfig& cfg);

// Layout: FA positions [x, y, z per antenna], beamformers [Re w_k (M), Im w_k
// (M) per user], user positions relative to the serving BS, own channels
// [Re h_k (M), Im h_k (M) per user], log10(1 + I/sigma^2), scaled rates.
Eigen::VectorXd flatten_observation(const LocalObservation& obs, const FeatureScaling& scaling);

// Per BS i: FA positions, beamformers, user positions, channels h_{j,i} for
// every j, rates.
Eigen::VectorXd flatten_state(const GlobalState& state, const FeatureScaling& scaling);

// Affine map between normalized action vectors (d_a reals) and physical
// actions. No clamping happens here; see project_action.
LocalAction decode_action(const Eigen::Ref<const Eigen::VectorXd>& raw, const NetworkConfig& cfg);
Eigen::VectorXd encode_action(const LocalAction& action, const NetworkConfig& cfg);

struct ProjectedAction {
  LocalAction action;
  bool violated_spacing = false;
};

bool spacing_violated(const Positions3<double>& positions, double d_min);

// Clamps positions into the region and scales beamformers down to P_max.
// The minimum spacing is only checked.
ProjectedAction project_action(const LocalAction& raw, const NetworkConfig& cfg);

Eigen::MatrixXd compute_sinr(const GlobalState& state, const NetworkConfig& cfg);

double sum_rate(const Eigen::MatrixXd& sinr);

// -penalty when any agent violated the spacing, else the sum-rate.
double reward(const GlobalState& state, const std::vector<bool>& violated, const NetworkConfig& cfg);

LocalObservation observe(const GlobalState& state, int agent, const NetworkConfig& cfg);

// Recomputes every channel from the current FA positions and the per-link
// geometry. SINRs and rates are left untouched.
void update_channels(GlobalState& state, const NetworkConfig& cfg);

// update_channels, then SINRs and rates from the current beamformers.
void refresh(GlobalState& state, const NetworkConfig& cfg);

// Uniform positions in the region, redrawn until the minimum spacing holds.
// Throws InfeasibleConfig after 10^4 attempts.
Positions3<double> sample_fa_positions(Rng& rng, const NetworkConfig& cfg);

struct ResetResult {
  GlobalState state;
  std::vector<LocalObservation> observations;
};

ResetResult reset(Rng& rng, const NetworkConfig& cfg);

struct StepOptions {
  // Keep the FA positions drawn at reset; position components of the
  // actions are ignored.
  bool freeze_fa = false;
};

struct StepResult {
  GlobalState state;
  std::vector<LocalObservation> observations;
  double reward = 0;
  std::vector<bool> violated;
};

StepResult step(const GlobalState& state, std::span<const LocalAction> actions, const NetworkConfig& cfg,
                const StepOptions& options = {});

// Stateful wrapper used by the rollout workers.
class Environment {
 public:
  explicit Environment(NetworkConfig cfg, StepOptions options = {});

  void reset(Rng& rng);
  double step(std::span<const LocalAction> actions);
  // raw: d_a x N matrix of normalized actions, one column per agent.
  double step_normalized(const Eigen::Ref<const Eigen::MatrixXd>& raw);

  // d_o x N, one column per agent.
  Eigen::MatrixXd observation_matrix() const;
  Eigen::VectorXd state_vector() const;

  const GlobalState& state() const { return state_; }
  const std::vector<LocalObservation>& observations() const { return observations_; }
  const std::vector<bool>& violated() const { return violated_; }
  const NetworkConfig& config() const { return cfg_; }
  const FeatureScaling& scaling() const { return scaling_; }
  const StepOptions& options() const { return options_; }

  Eigen::Index observation_size() const;
  Eigen::Index action_size() const;
  Eigen::Index state_size() const;

 private:
  NetworkConfig cfg_;
  StepOptions options_;
  FeatureScaling scaling_;
  GlobalState state_;
  std::vector<LocalObservation> observations_;
  std::vector<bool> violated_;
};

}  // namespace fluidmarl

#endif  // FLUIDMARL_ENV_HPP_
