#pragma once

#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>

namespace osdr {

using Rng = std::mt19937_64;

/// Input matrix does not have full column rank.
struct RankDeficiencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A matrix expected to be orthonormal is not (within tolerance).
struct NotOrthonormalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Masked Gram matrix too ill-conditioned for a trustworthy projection.
struct IllConditionedMaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fewer observed entries than the subspace dimension.
struct InsufficientObservationsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Mismatched operand shapes.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (files, fields, option combinations).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File could not be read or parsed.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Full-precision decimal rendering; round-trips IEEE doubles exactly.
inline std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace osdr
