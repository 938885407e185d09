// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLUIDMARL_COMMON_HPP_
#define FLUIDMARL_COMMON_HPP_

#include <stdexcept>
#include <string>

namespace fluidmarl {

// Base of every error the library throws. Subclasses name the failure class
// so callers (the CLI in particular) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class InvalidGeometry : public Error {
 public:
  using Error::Error;
};

class InfeasibleConfig : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

class Unsupported : public Error {
 public:
  using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;

}  // namespace fluidmarl

#endif  // FLUIDMARL_COMMON_HPP_
