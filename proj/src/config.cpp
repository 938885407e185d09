// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include "fluidmarl/config.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fluidmarl {

double Region::diagonal() const { return std::hypot(width, height); }

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double NetworkConfig::effective_reference_gain() const {
  if (reference_gain) return *reference_gain;
  const double r = wavelength / (4.0 * kPi);
  return r * r;
}

void NetworkConfig::place_defaults(double spacing, double height) {
  bs_positions.clear();
  for (int i = 0; i < num_bs; ++i) bs_positions.emplace_back(spacing * i, 0.0, height);
  user_sectors.clear();
  for (int k = 0; k < num_users; ++k) {
    const double start = 80.0 + 10.0 * k;
    user_sectors.push_back({5.0, 8.0, start, start + 10.0});
  }
}

NetworkConfig default_network(int num_bs, int num_users, int num_antennas) {
  NetworkConfig cfg;
  cfg.num_bs = num_bs;
  cfg.num_users = num_users;
  cfg.num_antennas = num_antennas;
  cfg.place_defaults();
  return cfg;
}

void NetworkConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw InvalidConfig("network." + field + ": " + why);
  };
  if (num_bs < 1) fail("N", "must be >= 1");
  if (num_users < 1) fail("K", "must be >= 1");
  if (num_antennas < 1) fail("M", "must be >= 1");
  if (num_paths < 1) fail("L", "must be >= 1");
  if (!(p_max > 0) || !std::isfinite(p_max)) fail("p_max", "must be positive");
  if (!(noise_power > 0) || !std::isfinite(noise_power)) fail("noise", "must be positive");
  if (!(wavelength > 0)) fail("wavelength", "must be positive");
  if (!(frequency > 0)) fail("frequency", "must be positive");
  if (std::abs(wavelength * frequency - kSpeedOfLight) > 0.005 * kSpeedOfLight)
    fail("wavelength", "wavelength * frequency must equal the speed of light within 0.5%");
  if (region.width < 0 || region.height < 0) fail("region", "extent must be non-negative");
  if (!(d_min >= 0)) fail("d_min", "must be non-negative");
  if (num_antennas > 1 && !(d_min < region.diagonal()))
    fail("d_min", "must be smaller than the region diagonal");
  if (!(penalty >= 0)) fail("penalty", "must be non-negative");
  if (!(path_loss_exponent >= 0)) fail("path_loss_exponent", "must be non-negative");
  if (reference_gain && !(*reference_gain > 0)) fail("reference_gain", "must be positive");
  if (static_cast<int>(bs_positions.size()) != num_bs)
    fail("bs_positions", "expected " + std::to_string(num_bs) + " entries");
  if (static_cast<int>(user_sectors.size()) != num_users)
    fail("sectors", "expected " + std::to_string(num_users) + " entries");
  for (const auto& s : user_sectors) {
    if (!(s.range_min > 0) || s.range_max < s.range_min) fail("sectors", "bad range interval");
    if (s.azimuth_max_deg < s.azimuth_min_deg) fail("sectors", "bad azimuth interval");
  }
}

// ---------------------------------------------------------------------------

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  // boost's INI reader only knows ';' comments.
  std::string normalized;
  {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      const auto first = line.find_first_not_of(" \t");
      if (first != std::string::npos && line[first] == '#') line = ";" + line;
      normalized += line;
      normalized += '\n';
    }
  }
  boost::property_tree::ptree tree;
  std::istringstream in(normalized);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidConfig(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  ConfigFile file;
  file.text_ = text;
  file.origin_ = origin;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      file.entries_.emplace_back(section, boost::trim_copy(body.data()));
      continue;
    }
    for (const auto& [key, value] : body)
      file.entries_.emplace_back(section + "." + key, boost::trim_copy(value.data()));
  }
  return file;
}

std::optional<std::string> ConfigFile::find(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

bool ConfigFile::has(const std::string& key) const { return find(key).has_value(); }

std::string ConfigFile::get_string(const std::string& key) const {
  auto v = find(key);
  if (!v) throw InvalidConfig(origin_ + ": missing required field '" + key + "'");
  return *v;
}

double ConfigFile::get_double(const std::string& key) const {
  const std::string raw = get_string(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw InvalidConfig(origin_ + ": field '" + key + "' is not a number: '" + raw + "'");
  }
}

long long ConfigFile::get_int(const std::string& key) const {
  const std::string raw = get_string(key);
  try {
    std::size_t used = 0;
    // accept 3e5 style integers
    const double v = std::stod(raw, &used);
    if (used != raw.size() || v != std::floor(v)) throw std::invalid_argument("not integral");
    return static_cast<long long>(v);
  } catch (const std::exception&) {
    throw InvalidConfig(origin_ + ": field '" + key + "' is not an integer: '" + raw + "'");
  }
}

bool ConfigFile::get_bool(const std::string& key) const {
  const std::string raw = boost::to_lower_copy(get_string(key));
  if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
  throw InvalidConfig(origin_ + ": field '" + key + "' is not a boolean: '" + raw + "'");
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}
long long ConfigFile::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}
bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}
std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  auto v = find(key);
  return v ? *v : fallback;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> split_numbers(const std::string& text, const std::string& seps,
                                  const std::string& field) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(seps), boost::token_compress_on);
  std::vector<double> out;
  for (auto& p : parts) {
    boost::trim(p);
    if (p.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(p, &used));
      if (used != p.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InvalidConfig("field '" + field + "': cannot parse number '" + p + "'");
    }
  }
  return out;
}

double parse_noise(const std::string& raw) {
  std::string s = boost::trim_copy(raw);
  std::string lower = boost::to_lower_copy(s);
  auto strip = [&](std::size_t n) { return boost::trim_copy(s.substr(0, s.size() - n)); };
  try {
    if (boost::ends_with(lower, "dbm")) return dbm_to_watts(std::stod(strip(3)));
    if (boost::ends_with(lower, "w")) return std::stod(strip(1));
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("unit");
    return v;
  } catch (const std::exception&) {
    throw InvalidConfig("field 'network.noise': expected '<value> dBm' or '<value> W', got '" + raw + "'");
  }
}

}  // namespace

NetworkConfig parse_network(const ConfigFile& file) {
  NetworkConfig cfg;
  cfg.num_bs = static_cast<int>(file.get_int("network.N"));
  cfg.num_users = static_cast<int>(file.get_int("network.K"));
  cfg.num_antennas = static_cast<int>(file.get_int("network.M"));
  cfg.num_paths = static_cast<int>(file.get_int("network.L", cfg.num_paths));
  cfg.p_max = file.get_double("network.p_max", cfg.p_max);
  cfg.d_min = file.get_double("network.d_min", cfg.d_min);
  cfg.region.width = file.get_double("network.region_width", cfg.region.width);
  cfg.region.height = file.get_double("network.region_height", cfg.region.height);
  cfg.region.plane_height = file.get_double("network.plane_height", cfg.region.plane_height);
  if (auto noise = file.find("network.noise")) cfg.noise_power = parse_noise(*noise);
  cfg.frequency = file.get_double("network.frequency", cfg.frequency);
  cfg.wavelength = file.get_double("network.wavelength", cfg.wavelength);
  cfg.path_loss_exponent = file.get_double("network.path_loss_exponent", cfg.path_loss_exponent);
  if (file.has("network.reference_gain")) cfg.reference_gain = file.get_double("network.reference_gain");
  cfg.penalty = file.get_double("network.penalty", cfg.penalty);
  cfg.user_height = file.get_double("network.user_height", cfg.user_height);

  const std::string mode = boost::to_lower_copy(file.get_string("network.gain_mode", "statistical"));
  if (mode == "statistical") {
    cfg.gain_mode = GainMode::kStatistical;
  } else if (mode == "bounded") {
    cfg.gain_mode = GainMode::kBounded;
  } else {
    throw InvalidConfig("field 'network.gain_mode': expected 'statistical' or 'bounded'");
  }

  cfg.place_defaults(file.get_double("network.bs_spacing", 35.0), file.get_double("network.bs_height", 10.0));

  if (auto raw = file.find("network.bs_positions")) {
    std::vector<std::string> items;
    boost::split(items, *raw, boost::is_any_of(";"));
    cfg.bs_positions.clear();
    for (const auto& item : items) {
      if (boost::trim_copy(item).empty()) continue;
      auto xyz = split_numbers(item, ", ", "network.bs_positions");
      if (xyz.size() != 3) throw InvalidConfig("field 'network.bs_positions': each entry needs x,y,z");
      cfg.bs_positions.emplace_back(xyz[0], xyz[1], xyz[2]);
    }
  }
  if (auto raw = file.find("network.sectors")) {
    std::vector<std::string> items;
    boost::split(items, *raw, boost::is_any_of(","));
    cfg.user_sectors.clear();
    for (const auto& item : items) {
      if (boost::trim_copy(item).empty()) continue;
      auto v = split_numbers(item, ": ", "network.sectors");
      if (v.size() != 4)
        throw InvalidConfig("field 'network.sectors': each entry is range_min:range_max:az_min:az_max");
      cfg.user_sectors.push_back({v[0], v[1], v[2], v[3]});
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace fluidmarl
