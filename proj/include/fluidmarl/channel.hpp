// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

// Field-response channel between a fluid-antenna base station and a
// single-antenna user:
//
//   h = f^H(v) * Sigma * G(u_1, ..., u_M)
//
// f(v) is the user's L-path field response, G stacks the per-antenna field
// responses at the base station and Sigma = diag(zeta_l / sqrt(L)).
// Everything here is a pure function of its arguments.

#ifndef FLUIDMARL_CHANNEL_HPP_
#define FLUIDMARL_CHANNEL_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "fluidmarl/common.hpp"

namespace fluidmarl {

template <typename Scalar>
using Position3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using Positions3 = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

template <typename Scalar>
using ComplexVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

template <typename Scalar>
using ComplexRowVector = Eigen::Matrix<std::complex<Scalar>, 1, Eigen::Dynamic>;

template <typename Scalar>
using ComplexMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

// Elevation xi and azimuth psi of one path, radians.
template <typename Scalar>
struct AnglePair {
  Scalar elevation{0};
  Scalar azimuth{0};
};

// Direction cosines (eta, beta, nu) of a path; always a unit vector.
template <typename Scalar>
struct VirtualAngles {
  Scalar eta{0};
  Scalar beta{0};
  Scalar nu{0};

  Position3<Scalar> direction() const { return {eta, beta, nu}; }
};

enum class GainMode {
  // |zeta_l| == 1 and no path loss, so ||h|| <= sqrt(M) holds exactly.
  kBounded,
  // zeta_l ~ CN(0, 1) and the channel is scaled by sqrt(large_scale).
  kStatistical,
};

template <typename Scalar>
struct ChannelGeometry {
  std::vector<AnglePair<Scalar>> aoa;
  // Shared by every antenna of the array (planar-wave far field).
  std::vector<AnglePair<Scalar>> aod;
  ComplexVector<Scalar> gains;
  GainMode mode = GainMode::kBounded;
  Scalar large_scale{1};

  Eigen::Index paths() const { return gains.size(); }

  void validate() const {
    const auto n = static_cast<std::size_t>(gains.size());
    if (n == 0 || aoa.size() != n || aod.size() != n)
      throw InvalidGeometry("channel geometry: aoa, aod and gains must all hold L >= 1 entries");
    if (!(large_scale > Scalar(0)) || !std::isfinite(large_scale))
      throw InvalidGeometry("channel geometry: large_scale must be positive and finite");
  }
};

template <typename Scalar>
VirtualAngles<Scalar> virtual_angles(const AnglePair<Scalar>& pair) {
  using std::cos;
  using std::sin;
  const Scalar c = cos(pair.elevation);
  return {c * cos(pair.azimuth), c * sin(pair.azimuth), sin(pair.elevation)};
}

// 3 x L matrix whose columns are the virtual-angle directions of `angles`.
template <typename Scalar>
Positions3<Scalar> direction_matrix(const std::vector<AnglePair<Scalar>>& angles) {
  Positions3<Scalar> d(3, static_cast<Eigen::Index>(angles.size()));
  for (std::size_t l = 0; l < angles.size(); ++l)
    d.col(static_cast<Eigen::Index>(l)) = virtual_angles(angles[l]).direction();
  return d;
}

namespace detail {

template <typename Scalar>
Scalar wavenumber(Scalar wavelength) {
  if (!(wavelength > Scalar(0)))
    throw InvalidConfig("wavelength must be positive");
  return Scalar(2 * kPi) / wavelength;
}

// exp(j * k * d_l . p) for every path l.
template <typename Scalar>
ComplexVector<Scalar> plane_wave_phases(const Position3<Scalar>& p,
                                        const Positions3<Scalar>& directions, Scalar k) {
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rho = directions.transpose() * p;
  ComplexVector<Scalar> out(rho.size());
  for (Eigen::Index l = 0; l < rho.size(); ++l) out(l) = std::polar(Scalar(1), k * rho(l));
  return out;
}

}  // namespace detail

template <typename Scalar>
ComplexVector<Scalar> user_field_response(const Position3<Scalar>& v,
                                          const ChannelGeometry<Scalar>& geom, Scalar wavelength) {
  const Scalar k = detail::wavenumber(wavelength);
  geom.validate();
  return detail::plane_wave_phases(v, direction_matrix(geom.aoa), k);
}

template <typename Scalar>
ComplexVector<Scalar> bs_field_response(const Position3<Scalar>& u,
                                        const ChannelGeometry<Scalar>& geom, Scalar wavelength) {
  const Scalar k = detail::wavenumber(wavelength);
  geom.validate();
  return detail::plane_wave_phases(u, direction_matrix(geom.aod), k);
}

// G(u_1..u_M), L x M.
template <typename Scalar>
ComplexMatrix<Scalar> bs_field_response_matrix(const Positions3<Scalar>& antennas,
                                               const ChannelGeometry<Scalar>& geom,
                                               Scalar wavelength) {
  const Scalar k = detail::wavenumber(wavelength);
  geom.validate();
  const Positions3<Scalar> d = direction_matrix(geom.aod);
  ComplexMatrix<Scalar> g(geom.paths(), antennas.cols());
  for (Eigen::Index m = 0; m < antennas.cols(); ++m)
    g.col(m) = detail::plane_wave_phases<Scalar>(antennas.col(m), d, k);
  return g;
}

// Row vector c = sqrt(large_scale) * f^H(v) * Sigma, so that h = c * G(u).
// Depends only on the user side; callers that move antennas repeatedly
// should compute it once.
template <typename Scalar>
ComplexRowVector<Scalar> path_coefficients(const Position3<Scalar>& v,
                                           const ChannelGeometry<Scalar>& geom, Scalar wavelength) {
  const ComplexVector<Scalar> f = user_field_response(v, geom, wavelength);
  const Scalar scale = std::sqrt(geom.large_scale / static_cast<Scalar>(geom.paths()));
  ComplexRowVector<Scalar> c(geom.paths());
  for (Eigen::Index l = 0; l < geom.paths(); ++l) c(l) = std::conj(f(l)) * geom.gains(l) * scale;
  return c;
}

template <typename Scalar>
ComplexRowVector<Scalar> channel_vector(const Position3<Scalar>& v, const Positions3<Scalar>& antennas,
                                        const ChannelGeometry<Scalar>& geom, Scalar wavelength) {
  if (antennas.cols() == 0) throw InvalidConfig("channel_vector: antenna list is empty");
  return path_coefficients(v, geom, wavelength) * bs_field_response_matrix(antennas, geom, wavelength);
}

// Real Jacobian of h with respect to the antenna coordinates.
// Rows: [Re h_1, Im h_1, ..., Re h_M, Im h_M]. Columns: [x_1, y_1, z_1, ..., z_M].
// h_m depends only on u_m, so the matrix is block diagonal with 2 x 3 blocks.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> channel_jacobian(
    const Position3<Scalar>& v, const Positions3<Scalar>& antennas,
    const ChannelGeometry<Scalar>& geom, Scalar wavelength) {
  if (antennas.cols() == 0) throw InvalidConfig("channel_jacobian: antenna list is empty");
  const Scalar k = detail::wavenumber(wavelength);
  const ComplexRowVector<Scalar> c = path_coefficients(v, geom, wavelength);
  const Positions3<Scalar> d = direction_matrix(geom.aod);
  const Eigen::Index m_count = antennas.cols();

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> jac =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(2 * m_count, 3 * m_count);
  const std::complex<Scalar> jk(Scalar(0), k);
  for (Eigen::Index m = 0; m < m_count; ++m) {
    const ComplexVector<Scalar> g = detail::plane_wave_phases<Scalar>(antennas.col(m), d, k);
    for (Eigen::Index axis = 0; axis < 3; ++axis) {
      std::complex<Scalar> dh(0);
      for (Eigen::Index l = 0; l < geom.paths(); ++l) dh += c(l) * jk * g(l) * d(axis, l);
      jac(2 * m, 3 * m + axis) = dh.real();
      jac(2 * m + 1, 3 * m + axis) = dh.imag();
    }
  }
  return jac;
}

// Draws angles and gains for one BS -> user link.
//   elevation ~ U[-pi/2, pi/2], azimuth ~ U[-pi, pi] for both ends;
//   Bounded:     zeta_l = exp(j phi), phi ~ U[0, 2 pi)
//   Statistical: zeta_l ~ CN(0, 1), large_scale = reference_gain * d^-alpha
template <typename Scalar, typename Urbg>
ChannelGeometry<Scalar> sample_geometry(Urbg& rng, int paths, Scalar reference_gain,
                                        Scalar path_loss_exponent, const Position3<Scalar>& bs,
                                        const Position3<Scalar>& user, GainMode mode) {
  if (paths < 1) throw InvalidConfig("sample_geometry: need at least one path");
  const Scalar dist = (bs - user).norm();
  if (!(dist > Scalar(0))) throw InvalidGeometry("sample_geometry: BS and user positions coincide");

  std::uniform_real_distribution<Scalar> elevation(Scalar(-kPi / 2), Scalar(kPi / 2));
  std::uniform_real_distribution<Scalar> azimuth(Scalar(-kPi), Scalar(kPi));
  std::uniform_real_distribution<Scalar> phase(Scalar(0), Scalar(2 * kPi));
  std::normal_distribution<Scalar> normal(Scalar(0), std::sqrt(Scalar(0.5)));

  ChannelGeometry<Scalar> geom;
  geom.mode = mode;
  geom.aoa.resize(static_cast<std::size_t>(paths));
  geom.aod.resize(static_cast<std::size_t>(paths));
  geom.gains.resize(paths);
  for (int l = 0; l < paths; ++l) {
    geom.aoa[static_cast<std::size_t>(l)] = {elevation(rng), azimuth(rng)};
    geom.aod[static_cast<std::size_t>(l)] = {elevation(rng), azimuth(rng)};
  }
  if (mode == GainMode::kBounded) {
    for (int l = 0; l < paths; ++l) geom.gains(l) = std::polar(Scalar(1), phase(rng));
    geom.large_scale = Scalar(1);
  } else {
    for (int l = 0; l < paths; ++l) {
      const Scalar re = normal(rng);
      const Scalar im = normal(rng);
      geom.gains(l) = {re, im};
    }
    geom.large_scale = reference_gain * std::pow(dist, -path_loss_exponent);
  }
  return geom;
}

}  // namespace fluidmarl

#endif  // FLUIDMARL_CHANNEL_HPP_
