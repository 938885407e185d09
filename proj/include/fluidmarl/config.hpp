// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLUIDMARL_CONFIG_HPP_
#define FLUIDMARL_CONFIG_HPP_

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fluidmarl/channel.hpp"

namespace fluidmarl {

// FA movable region: an axis-aligned width x height rectangle centred on the
// array reference point, lying in the plane z = plane_height (array-local
// coordinates, meters).
struct Region {
  double width = 0.5;
  double height = 0.5;
  double plane_height = 0.0;

  Eigen::Vector3d lower() const { return {-width / 2, -height / 2, plane_height}; }
  Eigen::Vector3d upper() const { return {width / 2, height / 2, plane_height}; }
  double diagonal() const;
};

// Users of one sector are dropped uniformly in range and azimuth around
// their serving BS.
struct UserSector {
  double range_min = 5.0;
  double range_max = 8.0;
  double azimuth_min_deg = 80.0;
  double azimuth_max_deg = 90.0;
};

double dbm_to_watts(double dbm);

struct NetworkConfig {
  int num_bs = 2;        // N
  int num_users = 2;     // K, per BS
  int num_antennas = 2;  // M, per BS
  int num_paths = 8;     // L

  double p_max = 1.0;     // W
  double d_min = 0.0273;  // m
  Region region;
  double noise_power = dbm_to_watts(-91.0);  // W
  double frequency = 5.5e9;                  // Hz
  double wavelength = 0.0545;                // m
  double path_loss_exponent = 2.8;
  // Gain at 1 m; unset means the free-space value (lambda / 4 pi)^2.
  std::optional<double> reference_gain;
  double penalty = 10.0;
  GainMode gain_mode = GainMode::kStatistical;

  std::vector<Eigen::Vector3d> bs_positions;
  std::vector<UserSector> user_sectors;
  double user_height = 1.5;

  double effective_reference_gain() const;
  // Throws InvalidConfig naming the offending field.
  void validate() const;

  // Fills bs_positions (a row along x, `spacing` apart at `height`) and user
  // sectors (10 degree wedges starting at 80 degrees) for the current N, K.
  void place_defaults(double spacing = 35.0, double height = 10.0);
};

// Defaults used throughout the experiments: N = 2, K = 2 sectors of
// 5..8 m, BSs 35 m apart at 10 m height.
NetworkConfig default_network(int num_bs = 2, int num_users = 2, int num_antennas = 2);

// Key/value file with [sections]. Lines starting with ';' or '#' are
// comments. Values are looked up as "section.key".
class ConfigFile {
 public:
  static ConfigFile load(const std::filesystem::path& path);
  static ConfigFile parse(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::optional<std::string> find(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  const std::string& text() const { return text_; }
  const std::string& origin() const { return origin_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string text_;
  std::string origin_;
};

// Reads the [network] section. N, K and M are required; everything else
// falls back to default_network(). Noise accepts "W" or "dBm" suffixes.
NetworkConfig parse_network(const ConfigFile& file);

}  // namespace fluidmarl

#endif  // FLUIDMARL_CONFIG_HPP_
