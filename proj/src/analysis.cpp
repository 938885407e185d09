// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include "fluidmarl/analysis.hpp"

#include <cmath>
#include <ostream>

namespace fluidmarl {

double lemma1_bound(const Region& region) {
  if (!(region.width > 0) || !(region.height > 0))
    throw InvalidGeometry("lemma1_bound: region must have positive area");
  return (region.width * region.width + region.height * region.height) / 4;
}

JacobianBounds jacobian_norm_bounds(const NetworkConfig& cfg) {
  const double nk = static_cast<double>(cfg.num_bs) * cfg.num_users;
  const double s2 = cfg.noise_power;
  JacobianBounds b;
  b.gamma = 2 * nk * cfg.p_max * std::sqrt(static_cast<double>(cfg.num_antennas)) / s2 * (1 + nk * cfg.p_max / s2);
  b.h = 2 * kPi * nk * cfg.num_antennas * std::sqrt(static_cast<double>(cfg.num_paths)) / cfg.wavelength;
  return b;
}

double theorem1_bound(const NetworkConfig& cfg, int horizon, std::optional<double> d_max) {
  const double d2 = d_max ? *d_max * *d_max : 4 * lemma1_bound(cfg.region);
  const double n = cfg.num_bs;
  const double k = cfg.num_users;
  const double m = cfg.num_antennas;
  const double t = horizon;
  const double s4 = cfg.noise_power * cfg.noise_power;
  const double gamma_term = 2 * n * n * k * k * cfg.p_max * cfg.p_max * std::sqrt(m) / s4;
  const double h_term = 2 * kPi * n * k * m * std::sqrt(static_cast<double>(cfg.num_paths)) / cfg.wavelength;
  const double lipschitz = std::sqrt(n * k) / std::log(2.0) * gamma_term * h_term;
  return t * t * d2 / 4 * lipschitz * lipschitz;
}

BoundReport bound_report(const NetworkConfig& cfg, int horizon, std::optional<double> d_max) {
  BoundReport r;
  r.d_max = d_max ? *d_max : cfg.region.diagonal();
  r.lemma1 = d_max ? r.d_max * r.d_max / 4 : lemma1_bound(cfg.region);
  const JacobianBounds jb = jacobian_norm_bounds(cfg);
  r.jac_gamma_bound = jb.gamma;
  r.jac_h_bound = jb.h;
  r.lipschitz_bound = std::sqrt(static_cast<double>(cfg.num_bs) * cfg.num_users) / std::log(2.0) * jb.gamma * jb.h;
  r.theorem1 = theorem1_bound(cfg, horizon, d_max);
  return r;
}

Eigen::MatrixXd network_channel_jacobian(const GlobalState& st, const NetworkConfig& cfg) {
  const int n = st.num_bs;
  const int k = st.num_users;
  const int m = st.num_antennas;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * m * n * n * k, 3 * m * n);
  Eigen::Index row = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      for (int u = 0; u < k; ++u) {
        const Link& link = st.link(j, i, u);
        const Eigen::Vector3d user = st.user_positions[static_cast<std::size_t>(i)].col(u);
        jac.block(row, 3 * m * j, 2 * m, 3 * m) =
            channel_jacobian<double>(user, st.fa_positions[static_cast<std::size_t>(j)], link.geometry,
                                     cfg.wavelength);
        row += 2 * m;
      }
  return jac;
}

Eigen::MatrixXcd mrt_baseline_beamformer(const Eigen::MatrixXcd& channels, double p_max) {
  const Eigen::Index k = channels.rows();
  if (k == 0) throw InvalidConfig("mrt_baseline_beamformer: no users");
  Eigen::MatrixXcd w(channels.cols(), k);
  const double amplitude = std::sqrt(p_max / static_cast<double>(k));
  for (Eigen::Index u = 0; u < k; ++u) {
    const double norm = channels.row(u).norm();
    if (!(norm > 0)) throw InvalidGeometry("mrt_baseline_beamformer: zero-norm channel");
    w.col(u) = channels.row(u).adjoint() / norm * amplitude;
  }
  return w;
}

GlobalState sample_scenario(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int n = cfg.num_bs;
  const int k = cfg.num_users;
  GlobalState st;
  st.num_bs = n;
  st.num_users = k;
  st.num_antennas = cfg.num_antennas;
  st.bs_positions = cfg.bs_positions;
  for (int i = 0; i < n; ++i) {
    Positions3<double> users(3, k);
    const Eigen::Vector3d& bs = cfg.bs_positions[static_cast<std::size_t>(i)];
    for (int u = 0; u < k; ++u) {
      Rng rng = make_rng(seed, Stream::kPositions, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(u)});
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const UserSector& sec = cfg.user_sectors[static_cast<std::size_t>(u)];
      const double r = sec.range_min + (sec.range_max - sec.range_min) * unit(rng);
      const double az = (sec.azimuth_min_deg + (sec.azimuth_max_deg - sec.azimuth_min_deg) * unit(rng)) * kPi / 180;
      users.col(u) = Eigen::Vector3d(bs.x() + r * std::cos(az), bs.y() + r * std::sin(az), cfg.user_height);
    }
    st.user_positions.push_back(users);
  }
  st.links.resize(static_cast<std::size_t>(n * n * k));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      for (int u = 0; u < k; ++u) {
        Rng rng = make_rng(seed, Stream::kGeometry,
                           {static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(u)});
        const Eigen::Vector3d user = st.user_positions[static_cast<std::size_t>(i)].col(u);
        Link& link = st.links[static_cast<std::size_t>((j * n + i) * k + u)];
        link.geometry = sample_geometry<double>(rng, cfg.num_paths, cfg.effective_reference_gain(),
                                                cfg.path_loss_exponent, cfg.bs_positions[static_cast<std::size_t>(j)],
                                                user, cfg.gain_mode);
        link.coefficients = path_coefficients<double>(user, link.geometry, cfg.wavelength);
        link.departure = direction_matrix(link.geometry.aod);
      }
  return st;
}

double mrt_sum_rate(GlobalState& st, const std::vector<Positions3<double>>& fa, const NetworkConfig& cfg) {
  st.fa_positions = fa;
  update_channels(st, cfg);
  st.beamformers.resize(static_cast<std::size_t>(st.num_bs));
  for (int i = 0; i < st.num_bs; ++i)
    st.beamformers[static_cast<std::size_t>(i)] = mrt_baseline_beamformer(st.channel(i, i), cfg.p_max);
  st.sinr = compute_sinr(st, cfg);
  return sum_rate(st.sinr);
}

double sample_variance(const std::vector<double>& values) {
  if (values.size() < 2) return 0;
  // Shifted by the first value so a constant sequence gives exactly zero.
  const double shift = values.front();
  double mean = 0;
  for (double v : values) mean += v - shift;
  mean /= static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - shift - mean) * (v - shift - mean);
  return ss / static_cast<double>(values.size() - 1);
}

VarianceEstimate reward_variance_mc(const NetworkConfig& cfg, int num_samples, std::uint64_t seed) {
  if (num_samples < 100) throw InvalidConfig("reward_variance_mc: need at least 100 samples");
  GlobalState st = sample_scenario(cfg, seed);
  VarianceEstimate out;
  out.samples.reserve(static_cast<std::size_t>(num_samples));
  std::vector<Positions3<double>> fa(static_cast<std::size_t>(cfg.num_bs));
  for (int s = 0; s < num_samples; ++s) {
    Rng rng = make_rng(seed, Stream::kAnalysis, {static_cast<std::uint64_t>(s)});
    for (auto& p : fa) p = sample_fa_positions(rng, cfg);
    out.samples.push_back(mrt_sum_rate(st, fa, cfg));
  }
  for (double v : out.samples) out.mean += v;
  out.mean /= static_cast<double>(num_samples);
  out.variance = sample_variance(out.samples);
  return out;
}

Landscape landscape_grid(const NetworkConfig& cfg, int resolution, std::uint64_t seed) {
  if (cfg.num_antennas != 1) throw Unsupported("landscape_grid: only M = 1 can be drawn on a plane");
  if (resolution < 2) throw InvalidConfig("landscape_grid: resolution must be at least 2");
  GlobalState st = sample_scenario(cfg, seed);
  Landscape out;
  const Eigen::Vector3d lo = cfg.region.lower();
  const Eigen::Vector3d hi = cfg.region.upper();
  out.xs = Eigen::VectorXd::LinSpaced(resolution, lo.x(), hi.x());
  out.ys = Eigen::VectorXd::LinSpaced(resolution, lo.y(), hi.y());
  out.values.resize(resolution, resolution);
  std::vector<Positions3<double>> fa(static_cast<std::size_t>(cfg.num_bs), Positions3<double>(3, 1));
  for (int a = 0; a < resolution; ++a)
    for (int b = 0; b < resolution; ++b) {
      for (auto& p : fa) p.col(0) = Eigen::Vector3d(out.xs(a), out.ys(b), cfg.region.plane_height);
      out.values(a, b) = mrt_sum_rate(st, fa, cfg);
    }
  return out;
}

void write_landscape_csv(std::ostream& out, const Landscape& l) {
  out << "x,y,R\n";
  out.precision(17);
  for (Eigen::Index a = 0; a < l.xs.size(); ++a)
    for (Eigen::Index b = 0; b < l.ys.size(); ++b) out << l.xs(a) << ',' << l.ys(b) << ',' << l.values(a, b) << '\n';
}

std::vector<VarianceSweepRow> variance_sweep(const NetworkConfig& base, const std::string& parameter,
                                             const std::vector<double>& values, int num_samples,
                                             std::uint64_t seed, int horizon) {
  std::vector<VarianceSweepRow> rows;
  for (double v : values) {
    NetworkConfig cfg = base;
    if (parameter == "N") {
      cfg.num_bs = static_cast<int>(v);
    } else if (parameter == "K") {
      cfg.num_users = static_cast<int>(v);
    } else if (parameter == "M") {
      cfg.num_antennas = static_cast<int>(v);
    } else if (parameter == "p_max") {
      cfg.p_max = v;
    } else {
      throw InvalidConfig("variance sweep: unknown parameter '" + parameter + "' (expected N, K, M or p_max)");
    }
    if (parameter == "N" || parameter == "K") {
      // Extend the placements of the base config without moving existing ones.
      NetworkConfig fresh = cfg;
      fresh.place_defaults();
      for (int i = 0; i < cfg.num_bs; ++i)
        if (i < static_cast<int>(base.bs_positions.size()))
          fresh.bs_positions[static_cast<std::size_t>(i)] = base.bs_positions[static_cast<std::size_t>(i)];
      for (int u = 0; u < cfg.num_users; ++u)
        if (u < static_cast<int>(base.user_sectors.size()))
          fresh.user_sectors[static_cast<std::size_t>(u)] = base.user_sectors[static_cast<std::size_t>(u)];
      cfg.bs_positions = fresh.bs_positions;
      cfg.user_sectors = fresh.user_sectors;
    }
    const VarianceEstimate est = reward_variance_mc(cfg, num_samples, seed);
    rows.push_back({parameter, v, est.mean, est.variance, theorem1_bound(cfg, horizon)});
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<VarianceSweepRow>& rows) {
  out << "parameter,value,mean_R,var_R,theorem1_bound\n";
  out.precision(17);
  for (const auto& r : rows)
    out << r.parameter << ',' << r.value << ',' << r.mean << ',' << r.variance << ',' << r.theorem1 << '\n';
}

}  // namespace fluidmarl
