#pragma once

// Principal branch W0 of the Lambert-W function on [0, inf), plus a
// log-domain entry point W0(e^y) for arguments too large to represent.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pmdlab/error.hpp"

namespace pmdlab {
namespace detail {

inline constexpr int kLambertMaxIter = 64;
inline constexpr double kLambertEps = std::numeric_limits<double>::epsilon();

// Winitzki's approximation, good to a few percent on [0, inf).
inline double lambert_winitzki(double z) {
  const double l = std::log1p(z);
  return l * (1.0 - std::log1p(l) / (2.0 + l));
}

// Solves w + log w = y for w > 0 (y > 1, so w > 0.567).
inline double lambert_w0_from_log(double y) {
  double w;
  if (y < 3.0) {
    w = lambert_winitzki(std::exp(y));
  } else {
    const double ly = std::log(y);
    w = y - ly + ly / y;
  }
  double step = 0.0;
  for (int it = 0; it < kLambertMaxIter; ++it) {
    const double g = w + std::log(w) - y;
    const double g1 = 1.0 + 1.0 / w;
    const double g2 = -1.0 / (w * w);
    step = g / (g1 - 0.5 * g * g2 / g1);
    double next = w - step;
    if (!(next > 0.0)) next = 0.5 * w;
    w = next;
    if (std::abs(step) <= 2.0 * kLambertEps * w) return w;
  }
  if (std::abs(step) <= 1e-14 * w) return w;
  throw NumericError("lambert_w0_exp: Halley iteration did not converge");
}

// Solves w e^w = z directly for 0 < z <= e.
inline double lambert_w0_direct(double z) {
  double w;
  if (z < 0.3) {
    w = z * (1.0 - z * (1.0 - z * (1.5 - z * (8.0 / 3.0))));
  } else {
    w = lambert_winitzki(z);
  }
  double step = 0.0;
  for (int it = 0; it < kLambertMaxIter; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - z;
    const double f1 = ew * (w + 1.0);
    step = f / (f1 - (w + 2.0) * f / (2.0 * w + 2.0));
    w -= step;
    if (w < 0.0) w = 0.0;
    if (std::abs(step) <= 2.0 * kLambertEps * w) return w;
  }
  if (std::abs(step) <= 1e-14 * std::max(w, 1e-300)) return w;
  throw NumericError("lambert_w0: Halley iteration did not converge");
}

}  // namespace detail

/// W0(z) for finite z >= 0.
inline double lambert_w0(double z) {
  detail::require(std::isfinite(z) && z >= 0.0, "lambert_w0: argument must be finite and >= 0");
  if (z == 0.0) return 0.0;
  if (z > std::numbers::e) return detail::lambert_w0_from_log(std::log(z));
  return detail::lambert_w0_direct(z);
}

/// W0(e^y) without forming e^y; valid for any finite y, including y >> 709.
inline double lambert_w0_exp(double y) {
  detail::require(std::isfinite(y), "lambert_w0_exp: argument must be finite");
  if (y > 1.0) return detail::lambert_w0_from_log(y);
  return lambert_w0(std::exp(y));
}

}  // namespace pmdlab
