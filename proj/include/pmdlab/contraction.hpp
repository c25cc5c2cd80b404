#pragma once

// Contraction rates, log-ratio bound constants and the finite-sample bound
// evaluators for binary rewards.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "pmdlab/error.hpp"
#include "pmdlab/solvers.hpp"

namespace pmdlab {

/// Constant placed in front of the mismatch bounds where only an order is known.
inline constexpr double kMismatchConstant = 2.0;
/// Constant placed in front of the one-step error term.
inline constexpr double kOneStepConstant = 1.0;
/// Relative headroom on the log-ratio clip level above the ideal target.
inline constexpr double kClipHeadroom = 1.1;

struct LogRatioBounds {
  double B = 0.0;
  double B_plus = 0.0;
  Method method = Method::mean;
};

enum class MismatchKind { mean, part, mean_refined };

inline std::string_view to_string(MismatchKind k) {
  switch (k) {
    case MismatchKind::mean: return "mean";
    case MismatchKind::part: return "part";
    case MismatchKind::mean_refined: return "mean_refined";
  }
  return "?";
}

inline MismatchKind mismatch_kind(Method m) {
  return m == Method::mean ? MismatchKind::mean : MismatchKind::part;
}

/// eta = 1 - 1 / (1 - p + p e^{1/tau}): exact one-step contraction of the gap 1 - p.
inline double eta_part_exact(double p, double tau) {
  detail::require_binary_args(p, tau);
  const double pa = p * std::expm1(1.0 / tau);
  if (!std::isfinite(pa)) return 1.0;
  return pa / (1.0 + pa);
}

/// Leading small-tau term 1 - e^{-p/tau}.
inline double eta_mean_asymptotic(double p, double tau) {
  detail::require_binary_args(p, tau);
  return -std::expm1(-p / tau);
}

/// Log-ratio bounds of the ideal binary-reward targets. B is clamped at 0 where the
/// leading-order expression for the partition method turns negative (large tau).
inline LogRatioBounds log_ratio_bounds(double p, double tau, Method method) {
  detail::require(p > 0.0 && p < 1.0, "log_ratio_bounds: p must lie in (0, 1)");
  detail::require(tau > 0.0 && std::isfinite(tau), "tau must be positive and finite");
  if (method == Method::mean) {
    return {p / tau, std::log(binary_ratios_mean_asymptotic(p, tau).rho_plus), method};
  }
  return {std::max(0.0, 1.0 / tau + std::log(p)), std::log(binary_ratios_part(p, tau).rho_plus),
          method};
}

/// 4 mismatch + 4 eps_opt + (5 M^2 / 3n) log(2 |Pi| / delta), M = 2B.
inline double erm_bound(double B, long n, double class_size, double delta, double eps_opt,
                        double mismatch) {
  detail::require(B >= 0.0 && n > 0 && class_size >= 1.0, "erm_bound: invalid B, n or class size");
  detail::require(delta > 0.0 && delta < 1.0, "erm_bound: delta must lie in (0, 1)");
  detail::require(eps_opt >= 0.0 && mismatch >= 0.0, "erm_bound: error terms must be >= 0");
  const double M = 2.0 * B;
  return 4.0 * mismatch + 4.0 * eps_opt +
         5.0 * M * M / (3.0 * static_cast<double>(n)) * std::log(2.0 * class_size / delta);
}

/// Bernstein radius for the leave-one-out mean of n Bernoulli(p) samples.
inline double epsilon_n(double p, long n, double delta) {
  detail::require(n >= 2, "epsilon_n: n must be >= 2");
  detail::require(p >= 0.0 && p <= 1.0, "epsilon_n: p must lie in [0, 1]");
  detail::require(delta > 0.0 && delta < 1.0, "epsilon_n: delta must lie in (0, 1)");
  const double L = std::log(4.0 * static_cast<double>(n) / delta);
  const double m = static_cast<double>(n - 1);
  return std::sqrt(2.0 * p * (1.0 - p) * L / m) + 2.0 * L / (3.0 * m);
}

/// High-probability bound on the target mismatch for binary rewards.
inline double mismatch_bound(double p, long n, double delta, double tau, MismatchKind kind) {
  detail::require(tau > 0.0 && std::isfinite(tau), "tau must be positive and finite");
  const double eps = epsilon_n(p, n, delta);
  const double tau2 = tau * tau;
  switch (kind) {
    case MismatchKind::mean: {
      const double q = 1.0 - p;
      return kMismatchConstant * (eps * eps + p * q * q) / tau2;
    }
    case MismatchKind::mean_refined:
      return kMismatchConstant * (p * eps + eps * eps) / tau2;
    case MismatchKind::part: {
      // a eps / (1 + a (p - eps)_+) written as eps / (1/a + (p - eps)_+) to survive a = inf.
      const double inv_a = 1.0 / std::expm1(1.0 / tau);
      const double denom = inv_a + std::max(0.0, p - eps);
      const double v = denom > 0.0 ? std::min(eps / denom, 1.0 / tau) : 1.0 / tau;
      return v * v;
    }
  }
  return 0.0;
}

/// (1 - eta) gap + e^{B_+/2} (B sqrt(log(|Pi|/delta)/n) + sqrt(eps_opt) + sqrt(mismatch)).
inline double one_step_bound(double eta, double current_gap, double B, double B_plus, long n,
                             double class_size, double delta, double eps_opt, double mismatch) {
  detail::require(eta >= 0.0 && eta <= 1.0, "one_step_bound: eta must lie in [0, 1]");
  detail::require(n > 0 && class_size >= 1.0, "one_step_bound: invalid n or class size");
  detail::require(delta > 0.0 && delta < 1.0, "one_step_bound: delta must lie in (0, 1)");
  detail::require(eps_opt >= 0.0 && mismatch >= 0.0, "one_step_bound: error terms must be >= 0");
  const double stat = B * std::sqrt(std::log(class_size / delta) / static_cast<double>(n));
  return (1.0 - eta) * current_gap +
         kOneStepConstant * std::exp(0.5 * B_plus) *
             (stat + std::sqrt(eps_opt) + std::sqrt(mismatch));
}

}  // namespace pmdlab
