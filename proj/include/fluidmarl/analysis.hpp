// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

// Reward-variance bounds, their Monte Carlo counterparts and the R(u)
// landscape with a matched-filter baseline beamformer.

#ifndef FLUIDMARL_ANALYSIS_HPP_
#define FLUIDMARL_ANALYSIS_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fluidmarl/env.hpp"

namespace fluidmarl {

// d_max^2 / 4 with d_max the diagonal of the rectangle.
double lemma1_bound(const Region& region);

struct JacobianBounds {
  // ||d gamma / d h|| <= 2 N K P sqrt(M) / sigma^2 * (1 + N K P / sigma^2)
  double gamma = 0;
  // ||d h / d u|| <= 2 pi N K M sqrt(L) / lambda
  double h = 0;
};

JacobianBounds jacobian_norm_bounds(const NetworkConfig& cfg);

// Exponents of the dominant-term form of the trajectory-variance bound.
struct ScalingExponents {
  int num_bs = 7;
  int num_users = 7;
  int p_max = 4;
  int num_antennas = 3;
  int d_max = 2;
  int horizon = 2;
  int frequency = 2;
  int num_paths = 1;
};

// Constant-carrying bound on VAR{sum_t R_t}:
//   (T^2 d^2 / 4) ((sqrt(NK) / ln 2) (2 N^2 K^2 P^2 sqrt(M) / sigma^4) (2 pi N K M sqrt(L) / lambda))^2
double theorem1_bound(const NetworkConfig& cfg, int horizon, std::optional<double> d_max = std::nullopt);

struct BoundReport {
  double d_max = 0;
  double lemma1 = 0;
  double jac_gamma_bound = 0;
  double jac_h_bound = 0;
  double lipschitz_bound = 0;  // sqrt(NK) / ln 2 * jac_gamma_bound * jac_h_bound
  double theorem1 = 0;
  ScalingExponents dominant_scaling;
};

BoundReport bound_report(const NetworkConfig& cfg, int horizon, std::optional<double> d_max = std::nullopt);

// Full real Jacobian of every channel h_{j,i}^[k] (rows, 2M each, in
// (j, i, k) order) with respect to every FA coordinate (columns, 3M per BS).
Eigen::MatrixXd network_channel_jacobian(const GlobalState& state, const NetworkConfig& cfg);

// Column k is conj(h_k)^T / ||h_k|| * sqrt(P_max / K) for row k of `channels`.
Eigen::MatrixXcd mrt_baseline_beamformer(const Eigen::MatrixXcd& channels, double p_max);

// User drops and per-link geometry drawn from streams keyed by (seed, BS,
// user) and (seed, j, i, k), so changing N or K keeps the shared links.
// FA positions and beamformers are left empty.
GlobalState sample_scenario(const NetworkConfig& cfg, std::uint64_t seed);

// Installs FA positions, recomputes channels and applies MRT in every cell;
// returns the sum-rate.
double mrt_sum_rate(GlobalState& state, const std::vector<Positions3<double>>& fa_positions,
                    const NetworkConfig& cfg);

struct VarianceEstimate {
  double variance = 0;  // sample variance, two-pass
  double mean = 0;
  std::vector<double> samples;
};

double sample_variance(const std::vector<double>& values);

// One scenario per call; sample s draws FA positions for every BS from a
// stream keyed by (seed, s).
VarianceEstimate reward_variance_mc(const NetworkConfig& cfg, int num_samples, std::uint64_t seed);

struct Landscape {
  Eigen::VectorXd xs;
  Eigen::VectorXd ys;
  Eigen::MatrixXd values;  // values(a, b) = R at (xs(a), ys(b))
};

// Requires M = 1. Every BS places its FA at the same in-region coordinate.
Landscape landscape_grid(const NetworkConfig& cfg, int resolution, std::uint64_t seed);

void write_landscape_csv(std::ostream& out, const Landscape& landscape);

struct VarianceSweepRow {
  std::string parameter;
  double value = 0;
  double mean = 0;
  double variance = 0;
  double theorem1 = 0;
};

// Varies one of "N", "K", "M", "p_max" over `values`, everything else and
// the seed held fixed.
std::vector<VarianceSweepRow> variance_sweep(const NetworkConfig& base, const std::string& parameter,
                                             const std::vector<double>& values, int num_samples,
                                             std::uint64_t seed, int horizon);

void write_sweep_csv(std::ostream& out, const std::vector<VarianceSweepRow>& rows);

}  // namespace fluidmarl

#endif  // FLUIDMARL_ANALYSIS_HPP_
