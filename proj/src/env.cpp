// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include "fluidmarl/env.hpp"

#include <cmath>

namespace fluidmarl {

Eigen::Index state_dimension(int n, int k, int m) {
  return static_cast<Eigen::Index>(n) * (3 * m + 2 * k * m * (n + 1) + 4 * k);
}

Eigen::Index observation_dimension(int k, int m) { return 3 * m + 4 * k * m + 5 * k; }

Eigen::Index action_dimension(int k, int m) { return 3 * m + 2 * k * m; }

FeatureScaling feature_scaling(const NetworkConfig& cfg) {
  FeatureScaling s;
  s.region_center = (cfg.region.lower() + cfg.region.upper()) / 2;
  s.region_half_extent = (cfg.region.upper() - cfg.region.lower()) / 2;
  for (int a = 0; a < 3; ++a)
    if (!(s.region_half_extent(a) > 0)) s.region_half_extent(a) = 1;

  double range_max = 1;
  double range_mid = 0;
  for (const auto& sec : cfg.user_sectors) {
    range_max = std::max(range_max, sec.range_max);
    range_mid += 0.5 * (sec.range_min + sec.range_max);
  }
  if (!cfg.user_sectors.empty()) range_mid /= static_cast<double>(cfg.user_sectors.size());
  s.user_scale = range_max;

  s.beam_unit = std::sqrt(cfg.p_max / (2.0 * cfg.num_users * cfg.num_antennas));
  if (cfg.gain_mode == GainMode::kStatistical) {
    const double bs_height = cfg.bs_positions.empty() ? 10.0 : cfg.bs_positions.front().z();
    const double nominal = std::hypot(range_mid, bs_height - cfg.user_height);
    s.channel_unit = std::sqrt(cfg.effective_reference_gain() *
                               std::pow(std::max(nominal, 1.0), -cfg.path_loss_exponent));
  }
  s.noise_power = cfg.noise_power;
  return s;
}

namespace {

void append_complex_columns(Eigen::VectorXd& out, Eigen::Index& pos, const Eigen::MatrixXcd& cols,
                            double unit) {
  // one column per user: real parts then imaginary parts
  for (Eigen::Index k = 0; k < cols.cols(); ++k) {
    out.segment(pos, cols.rows()) = cols.col(k).real() / unit;
    pos += cols.rows();
    out.segment(pos, cols.rows()) = cols.col(k).imag() / unit;
    pos += cols.rows();
  }
}

void append_positions(Eigen::VectorXd& out, Eigen::Index& pos, const Positions3<double>& p,
                      const Eigen::Vector3d& center, const Eigen::Vector3d& scale) {
  for (Eigen::Index m = 0; m < p.cols(); ++m) {
    out.segment<3>(pos) = (p.col(m) - center).cwiseQuotient(scale);
    pos += 3;
  }
}

}  // namespace

Eigen::VectorXd flatten_observation(const LocalObservation& obs, const FeatureScaling& s) {
  const auto m = static_cast<int>(obs.fa_positions.cols());
  const auto k = static_cast<int>(obs.user_positions.cols());
  Eigen::VectorXd out(observation_dimension(k, m));
  Eigen::Index pos = 0;
  append_positions(out, pos, obs.fa_positions, s.region_center, s.region_half_extent);
  append_complex_columns(out, pos, obs.beamformers, s.beam_unit);
  append_positions(out, pos, obs.user_positions, obs.bs_position, Eigen::Vector3d::Constant(s.user_scale));
  append_complex_columns(out, pos, obs.channels.transpose(), s.channel_unit);
  for (int u = 0; u < k; ++u) out(pos++) = std::log10(1.0 + obs.interference(u) / s.noise_power);
  for (int u = 0; u < k; ++u) out(pos++) = obs.rates(u) * s.rate_scale;
  return out;
}

Eigen::VectorXd flatten_state(const GlobalState& st, const FeatureScaling& s) {
  Eigen::VectorXd out(state_dimension(st.num_bs, st.num_users, st.num_antennas));
  Eigen::Index pos = 0;
  for (int i = 0; i < st.num_bs; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    append_positions(out, pos, st.fa_positions[ui], s.region_center, s.region_half_extent);
    append_complex_columns(out, pos, st.beamformers[ui], s.beam_unit);
    append_positions(out, pos, st.user_positions[ui], st.bs_positions[ui],
                     Eigen::Vector3d::Constant(s.user_scale));
    for (int j = 0; j < st.num_bs; ++j) append_complex_columns(out, pos, st.channel(j, i).transpose(), s.channel_unit);
    for (int u = 0; u < st.num_users; ++u) out(pos++) = st.rates(i, u) * s.rate_scale;
  }
  return out;
}

LocalAction decode_action(const Eigen::Ref<const Eigen::VectorXd>& raw, const NetworkConfig& cfg) {
  const int m = cfg.num_antennas;
  const int k = cfg.num_users;
  if (raw.size() != action_dimension(k, m))
    throw ShapeMismatch("decode_action: expected " + std::to_string(action_dimension(k, m)) + " entries");
  const FeatureScaling s = feature_scaling(cfg);
  LocalAction a;
  a.fa_positions.resize(3, m);
  Eigen::Index pos = 0;
  for (int i = 0; i < m; ++i, pos += 3)
    a.fa_positions.col(i) = s.region_center + raw.segment<3>(pos).cwiseProduct(s.region_half_extent);
  a.beamformers.resize(m, k);
  for (int u = 0; u < k; ++u) {
    a.beamformers.col(u).real() = raw.segment(pos, m) * s.beam_unit;
    pos += m;
    a.beamformers.col(u).imag() = raw.segment(pos, m) * s.beam_unit;
    pos += m;
  }
  return a;
}

Eigen::VectorXd encode_action(const LocalAction& a, const NetworkConfig& cfg) {
  const FeatureScaling s = feature_scaling(cfg);
  Eigen::VectorXd out(action_dimension(static_cast<int>(a.beamformers.cols()),
                                       static_cast<int>(a.fa_positions.cols())));
  Eigen::Index pos = 0;
  append_positions(out, pos, a.fa_positions, s.region_center, s.region_half_extent);
  append_complex_columns(out, pos, a.beamformers, s.beam_unit);
  return out;
}

bool spacing_violated(const Positions3<double>& p, double d_min) {
  for (Eigen::Index a = 0; a < p.cols(); ++a)
    for (Eigen::Index b = a + 1; b < p.cols(); ++b)
      if ((p.col(a) - p.col(b)).norm() < d_min) return true;
  return false;
}

ProjectedAction project_action(const LocalAction& raw, const NetworkConfig& cfg) {
  ProjectedAction out{raw, false};
  const Eigen::Vector3d lo = cfg.region.lower();
  const Eigen::Vector3d hi = cfg.region.upper();
  for (Eigen::Index m = 0; m < out.action.fa_positions.cols(); ++m)
    out.action.fa_positions.col(m) = out.action.fa_positions.col(m).cwiseMax(lo).cwiseMin(hi);
  const double power = out.action.beamformers.squaredNorm();
  if (power > cfg.p_max) out.action.beamformers *= std::sqrt(cfg.p_max / power);
  out.violated_spacing = spacing_violated(out.action.fa_positions, cfg.d_min);
  return out;
}

Eigen::MatrixXd compute_sinr(const GlobalState& st, const NetworkConfig& cfg) {
  const int n = st.num_bs;
  const int k = st.num_users;
  Eigen::MatrixXd sinr(n, k);
  for (int i = 0; i < n; ++i) {
    // received power matrix from BS j: (k, k') -> |h_{j,i}^[k] w_j^[k']|^2
    Eigen::MatrixXd desired_cell = (st.channel(i, i) * st.beamformers[static_cast<std::size_t>(i)]).cwiseAbs2();
    Eigen::VectorXd inter = Eigen::VectorXd::Zero(k);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      inter += (st.channel(j, i) * st.beamformers[static_cast<std::size_t>(j)]).cwiseAbs2().rowwise().sum();
    }
    for (int u = 0; u < k; ++u) {
      const double signal = desired_cell(u, u);
      const double intra = desired_cell.row(u).sum() - signal;
      sinr(i, u) = signal / (intra + inter(u) + cfg.noise_power);
    }
  }
  return sinr;
}

double sum_rate(const Eigen::MatrixXd& sinr) {
  double total = 0;
  for (Eigen::Index i = 0; i < sinr.size(); ++i) total += std::log2(1.0 + sinr(i));
  return total;
}

double reward(const GlobalState& st, const std::vector<bool>& violated, const NetworkConfig& cfg) {
  for (bool v : violated)
    if (v) return -cfg.penalty;
  return sum_rate(st.sinr);
}

LocalObservation observe(const GlobalState& st, int agent, const NetworkConfig& cfg) {
  if (agent < 0 || agent >= st.num_bs)
    throw std::out_of_range("observe: agent index " + std::to_string(agent) + " out of range");
  const auto ua = static_cast<std::size_t>(agent);
  LocalObservation o;
  o.bs_position = cfg.bs_positions[ua];
  o.fa_positions = st.fa_positions[ua];
  o.beamformers = st.beamformers[ua];
  o.user_positions = st.user_positions[ua];
  o.channels = st.channel(agent, agent);
  o.interference = Eigen::VectorXd::Zero(st.num_users);
  for (int j = 0; j < st.num_bs; ++j) {
    if (j == agent) continue;
    o.interference += (st.channel(j, agent) * st.beamformers[static_cast<std::size_t>(j)])
                          .cwiseAbs2()
                          .rowwise()
                          .sum();
  }
  o.rates = st.rates.row(agent).transpose();
  return o;
}

void update_channels(GlobalState& st, const NetworkConfig& cfg) {
  const double k = 2 * kPi / cfg.wavelength;
  const int n = st.num_bs;
  st.channels.assign(static_cast<std::size_t>(n * n), Eigen::MatrixXcd());
  for (int j = 0; j < n; ++j) {
    const auto& antennas = st.fa_positions[static_cast<std::size_t>(j)];
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXcd h(st.num_users, st.num_antennas);
      for (int u = 0; u < st.num_users; ++u) {
        const Link& link = st.link(j, i, u);
        const Eigen::MatrixXd phase = k * (link.departure.transpose() * antennas);  // L x M
        Eigen::MatrixXcd g(phase.rows(), phase.cols());
        for (Eigen::Index e = 0; e < phase.size(); ++e) g(e) = std::polar(1.0, phase(e));
        h.row(u) = link.coefficients * g;
      }
      st.channels[static_cast<std::size_t>(j * n + i)] = std::move(h);
    }
  }
}

void refresh(GlobalState& st, const NetworkConfig& cfg) {
  update_channels(st, cfg);
  st.sinr = compute_sinr(st, cfg);
  st.rates = (1.0 + st.sinr.array()).log() / std::log(2.0);
}

Positions3<double> sample_fa_positions(Rng& rng, const NetworkConfig& cfg) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::Vector3d lo = cfg.region.lower();
  const Eigen::Vector3d span = cfg.region.upper() - lo;
  Positions3<double> p(3, cfg.num_antennas);
  constexpr int kMaxAttempts = 10000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    for (int m = 0; m < cfg.num_antennas; ++m) {
      const double x = unit(rng);
      const double y = unit(rng);
      p.col(m) = lo + Eigen::Vector3d(x * span.x(), y * span.y(), 0.0);
    }
    if (!spacing_violated(p, cfg.d_min)) return p;
  }
  throw InfeasibleConfig("cannot place " + std::to_string(cfg.num_antennas) +
                         " antennas with spacing d_min in the region after 10^4 attempts");
}

namespace {

Eigen::MatrixXcd random_beamformers(Rng& rng, const NetworkConfig& cfg) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXcd w(cfg.num_antennas, cfg.num_users);
  for (int u = 0; u < cfg.num_users; ++u) {
    for (int m = 0; m < cfg.num_antennas; ++m) {
      const double re = normal(rng);
      const double im = normal(rng);
      w(m, u) = {re, im};
    }
    w.col(u) *= std::sqrt(cfg.p_max / cfg.num_users) / w.col(u).norm();
  }
  return w;
}

}  // namespace

ResetResult reset(Rng& rng, const NetworkConfig& cfg) {
  cfg.validate();
  const int n = cfg.num_bs;
  const int k = cfg.num_users;
  GlobalState st;
  st.num_bs = n;
  st.num_users = k;
  st.num_antennas = cfg.num_antennas;
  st.bs_positions = cfg.bs_positions;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  st.user_positions.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Positions3<double> users(3, k);
    const Eigen::Vector3d& bs = cfg.bs_positions[static_cast<std::size_t>(i)];
    for (int u = 0; u < k; ++u) {
      const UserSector& sec = cfg.user_sectors[static_cast<std::size_t>(u)];
      const double r = sec.range_min + (sec.range_max - sec.range_min) * unit(rng);
      const double az_deg = sec.azimuth_min_deg + (sec.azimuth_max_deg - sec.azimuth_min_deg) * unit(rng);
      const double az = az_deg * kPi / 180.0;
      users.col(u) = Eigen::Vector3d(bs.x() + r * std::cos(az), bs.y() + r * std::sin(az), cfg.user_height);
    }
    st.user_positions[static_cast<std::size_t>(i)] = users;
  }

  const double g0 = cfg.effective_reference_gain();
  st.links.resize(static_cast<std::size_t>(n * n * k));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      for (int u = 0; u < k; ++u) {
        const Eigen::Vector3d user = st.user_positions[static_cast<std::size_t>(i)].col(u);
        Link& link = st.links[static_cast<std::size_t>((j * n + i) * k + u)];
        link.geometry = sample_geometry<double>(rng, cfg.num_paths, g0, cfg.path_loss_exponent,
                                                cfg.bs_positions[static_cast<std::size_t>(j)], user,
                                                cfg.gain_mode);
        link.coefficients = path_coefficients<double>(user, link.geometry, cfg.wavelength);
        link.departure = direction_matrix(link.geometry.aod);
      }

  for (int i = 0; i < n; ++i) st.fa_positions.push_back(sample_fa_positions(rng, cfg));
  for (int i = 0; i < n; ++i) st.beamformers.push_back(random_beamformers(rng, cfg));

  refresh(st, cfg);
  ResetResult out{std::move(st), {}};
  for (int i = 0; i < n; ++i) out.observations.push_back(observe(out.state, i, cfg));
  return out;
}

StepResult step(const GlobalState& st, std::span<const LocalAction> actions, const NetworkConfig& cfg,
                const StepOptions& options) {
  if (static_cast<int>(actions.size()) != st.num_bs)
    throw ShapeMismatch("step: expected one action per agent");
  StepResult out;
  out.state = st;
  out.violated.assign(static_cast<std::size_t>(st.num_bs), false);
  for (int i = 0; i < st.num_bs; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    ProjectedAction p = project_action(actions[ui], cfg);
    if (options.freeze_fa) {
      out.state.fa_positions[ui] = st.fa_positions[ui];
      out.violated[ui] = spacing_violated(st.fa_positions[ui], cfg.d_min);
    } else {
      out.state.fa_positions[ui] = std::move(p.action.fa_positions);
      out.violated[ui] = p.violated_spacing;
    }
    out.state.beamformers[ui] = std::move(p.action.beamformers);
  }
  refresh(out.state, cfg);
  bool any = false;
  for (bool f : out.violated) any = any || f;
  out.reward = any ? -cfg.penalty : sum_rate(out.state.sinr);
  for (int i = 0; i < st.num_bs; ++i) out.observations.push_back(observe(out.state, i, cfg));
  return out;
}

// ---------------------------------------------------------------------------

Environment::Environment(NetworkConfig cfg, StepOptions options)
    : cfg_(std::move(cfg)), options_(options), scaling_(feature_scaling(cfg_)) {
  cfg_.validate();
}

void Environment::reset(Rng& rng) {
  ResetResult r = fluidmarl::reset(rng, cfg_);
  state_ = std::move(r.state);
  observations_ = std::move(r.observations);
  violated_.assign(static_cast<std::size_t>(cfg_.num_bs), false);
}

double Environment::step(std::span<const LocalAction> actions) {
  StepResult r = fluidmarl::step(state_, actions, cfg_, options_);
  state_ = std::move(r.state);
  observations_ = std::move(r.observations);
  violated_ = std::move(r.violated);
  return r.reward;
}

double Environment::step_normalized(const Eigen::Ref<const Eigen::MatrixXd>& raw) {
  if (raw.cols() != cfg_.num_bs || raw.rows() != action_size())
    throw ShapeMismatch("step_normalized: expected a d_a x N action matrix");
  std::vector<LocalAction> actions;
  actions.reserve(static_cast<std::size_t>(cfg_.num_bs));
  for (int i = 0; i < cfg_.num_bs; ++i) actions.push_back(decode_action(raw.col(i), cfg_));
  return step(actions);
}

Eigen::MatrixXd Environment::observation_matrix() const {
  Eigen::MatrixXd out(observation_size(), cfg_.num_bs);
  for (int i = 0; i < cfg_.num_bs; ++i)
    out.col(i) = flatten_observation(observations_[static_cast<std::size_t>(i)], scaling_);
  return out;
}

Eigen::VectorXd Environment::state_vector() const { return flatten_state(state_, scaling_); }

Eigen::Index Environment::observation_size() const {
  return observation_dimension(cfg_.num_users, cfg_.num_antennas);
}
Eigen::Index Environment::action_size() const { return action_dimension(cfg_.num_users, cfg_.num_antennas); }
Eigen::Index Environment::state_size() const {
  return state_dimension(cfg_.num_bs, cfg_.num_users, cfg_.num_antennas);
}

}  // namespace fluidmarl
