#pragma once

// Exact single-state policy updates: the Boltzmann (partition) update, the
// mean-baselined update in Lambert-W form, an independent numerical solver
// for the mixed KL/chi^2 subproblem, and closed forms for binary rewards.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pmdlab/dist.hpp"
#include "pmdlab/error.hpp"
#include "pmdlab/lambertw.hpp"
#include "pmdlab/numeric.hpp"

namespace pmdlab {

/// Which regression target the update regresses onto.
enum class Method { mean, part };

inline std::string_view to_string(Method m) { return m == Method::mean ? "mean" : "part"; }

inline Method parse_method(std::string_view s) {
  if (s == "mean") return Method::mean;
  if (s == "part") return Method::part;
  throw InvalidArgument("unknown method '" + std::string(s) + "' (expected mean or part)");
}

struct PmdConfig {
  double tau = 1.0;
  double lambda_tol = 1e-12;
  int max_iter = 200;

  void validate() const {
    detail::require(std::isfinite(tau) && tau > 0.0, "tau must be positive and finite");
    detail::require(lambda_tol > 0.0, "lambda_tol must be positive");
    detail::require(max_iter > 0, "max_iter must be positive");
  }
};

struct PmdUpdateResult {
  DiscreteDistribution policy;
  /// log(policy / pi_t) per action; finite even where policy underflows to 0.
  std::vector<double> log_ratio;
  double lambda = 0.0;
  double kkt_residual = 0.0;
  double normalization_residual = 0.0;
  int iterations = 0;
  /// log E[exp(delta/tau)] and log E[exp(2 delta/tau)] under pi_t.
  double log_A = 0.0;
  double log_B = 0.0;
};

struct LambdaBounds {
  double lo = 0.0;
  double hi = 0.0;
};

namespace detail {

struct ScaledAdvantage {
  std::vector<double> log_pi;
  std::vector<double> d;  // (r - E r) / tau
  double log_A = 0.0;
  double log_B = 0.0;
  double a_minus_1 = 0.0;  // A - 1, computed without cancellation
  double max_abs_d = 0.0;
};

inline ScaledAdvantage scaled_advantage(const DiscreteDistribution& pi, const RewardVector& r,
                                        double tau) {
  require_same_size(pi.size(), r.size(), "policy update");
  require(pi.full_support(), "policy update needs pi_t with full support");
  require(std::isfinite(tau) && tau > 0.0, "tau must be positive and finite");
  ScaledAdvantage sa;
  const double mean_r = expected_reward(pi, r);
  const std::size_t n = pi.size();
  sa.log_pi = pi.log_probs();
  sa.d.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    sa.d[i] = (r[i] - mean_r) / tau;
    sa.max_abs_d = std::max(sa.max_abs_d, std::abs(sa.d[i]));
  }
  std::vector<double> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = sa.log_pi[i] + sa.d[i];
  sa.log_A = log_sum_exp(buf);
  for (std::size_t i = 0; i < n; ++i) buf[i] = sa.log_pi[i] + 2.0 * sa.d[i];
  sa.log_B = log_sum_exp(buf);
  if (sa.max_abs_d <= 0.5) {
    // E[e^d] - 1 = E[e^d - 1 - d] + E[d]; the first term is a sum of nonnegatives.
    for (std::size_t i = 0; i < n; ++i) buf[i] = pi[i] * expm1_minus_x(sa.d[i]);
    double s = pairwise_sum(buf);
    for (std::size_t i = 0; i < n; ++i) buf[i] = pi[i] * sa.d[i];
    s += pairwise_sum(buf);
    sa.a_minus_1 = std::max(0.0, s);
  } else {
    sa.a_minus_1 = std::max(0.0, std::expm1(sa.log_A));
  }
  return sa;
}

// log(A - 1), valid also when A overflows.
inline double log_a_minus_1(const ScaledAdvantage& sa) {
  if (sa.log_A > 30.0) return sa.log_A + std::log1p(-std::exp(-sa.log_A));
  return std::log(sa.a_minus_1);
}

inline PmdUpdateResult finish_update(const ScaledAdvantage& sa, std::vector<double> u) {
  const std::size_t n = u.size();
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = std::exp(sa.log_pi[i] + u[i]);
  const double total = pairwise_sum(p);
  for (double& v : p) v /= total;
  PmdUpdateResult res{DiscreteDistribution(std::move(p)), std::move(u)};
  res.normalization_residual = std::abs(total - 1.0);
  res.log_A = sa.log_A;
  res.log_B = sa.log_B;
  return res;
}

}  // namespace detail

/// Boltzmann update pi'(y) = pi_t(y) exp(r(y)/tau) / Z, in log domain.
inline PmdUpdateResult pmd_part_update(const DiscreteDistribution& pi_t, const RewardVector& r,
                                       const PmdConfig& cfg) {
  cfg.validate();
  const auto sa = detail::scaled_advantage(pi_t, r, cfg.tau);
  std::vector<double> u(sa.d);
  for (double& v : u) v -= sa.log_A;
  auto res = detail::finish_update(sa, std::move(u));
  res.kkt_residual = res.normalization_residual;
  return res;
}

/// tau^2 A (A - 1) / B <= lambda <= tau^2 log A, A = E exp(delta/tau), B = E exp(2 delta/tau).
inline LambdaBounds lambda_bounds(const DiscreteDistribution& pi_t, const RewardVector& r,
                                  double tau) {
  const auto sa = detail::scaled_advantage(pi_t, r, tau);
  if (sa.a_minus_1 <= 0.0) return {0.0, 0.0};
  const double tau2 = tau * tau;
  const double lo = tau2 * std::exp(sa.log_A + detail::log_a_minus_1(sa) - sa.log_B);
  const double hi = tau2 * (sa.max_abs_d <= 0.5 ? std::log1p(sa.a_minus_1) : sa.log_A);
  return {lo, std::max(lo, hi)};
}

/// Mean-baselined update: u(y) = d(y) - W(x e^{d(y)}), d = delta/tau, x = lambda/tau^2,
/// with lambda chosen so that E_{pi_t} e^u = 1.
inline PmdUpdateResult pmd_mean_update(const DiscreteDistribution& pi_t, const RewardVector& r,
                                       const PmdConfig& cfg) {
  cfg.validate();
  const auto sa = detail::scaled_advantage(pi_t, r, cfg.tau);
  const std::size_t n = sa.d.size();

  if (sa.a_minus_1 <= cfg.lambda_tol) {
    auto res = detail::finish_update(sa, sa.d);
    res.kkt_residual = 0.0;
    return res;
  }

  // Work in t = log x. Residual R(t) = E_{pi_t}[W(e^{t+d}) / e^t] - 1 is decreasing in t.
  std::vector<double> w(n), buf(n);
  auto residual = [&](double t) {
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = lambert_w0_exp(t + sa.d[i]);
      buf[i] = sa.log_pi[i] + std::log(w[i]) - t;
    }
    return std::expm1(log_sum_exp(buf));
  };
  auto slope = [&](double t) {
    // dR/dt = -E[rho W / (1 + W)], rho = W / x.
    for (std::size_t i = 0; i < n; ++i) {
      buf[i] = pi_t[i] * std::exp(std::log(w[i]) - t) * w[i] / (1.0 + w[i]);
    }
    return -pairwise_sum(buf);
  };

  const double log_hi_x =
      std::log(sa.max_abs_d <= 0.5 ? std::log1p(sa.a_minus_1) : sa.log_A);
  const double log_lo_x = sa.log_A + detail::log_a_minus_1(sa) - sa.log_B;
  double a = std::min(log_lo_x, log_hi_x);
  double b = std::max(log_lo_x, log_hi_x);
  const double ln2 = std::log(2.0);
  double ra = residual(a);
  double rb = residual(b);
  for (int widen = 0; ra < 0.0 || rb > 0.0; ++widen) {
    if (widen >= 200) {
      throw NumericError("pmd_mean_update: could not bracket lambda (residuals " +
                         std::to_string(ra) + ", " + std::to_string(rb) + ")");
    }
    if (ra < 0.0) ra = residual(a -= ln2);
    if (rb > 0.0) rb = residual(b += ln2);
  }

  const double floor_tol =
      std::max(cfg.lambda_tol, 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + sa.max_abs_d));
  double t = std::abs(ra) < std::abs(rb) ? a : b;
  double rt = std::abs(ra) < std::abs(rb) ? ra : rb;
  if (ra == 0.0) { t = a; rt = 0.0; }
  if (rb == 0.0) { t = b; rt = 0.0; }
  int iter = 0;
  for (; iter < cfg.max_iter && std::abs(rt) > cfg.lambda_tol; ++iter) {
    residual(t);
    const double g = slope(t);
    double next = (g < 0.0) ? t - rt / g : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    t = next;
    rt = residual(t);
    if (rt > 0.0) a = t;
    else if (rt < 0.0) b = t;
    if (b - a <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
      if (std::abs(rt) <= floor_tol) break;
      throw NumericError("pmd_mean_update: bracket collapsed with residual " +
                         std::to_string(rt));
    }
  }
  if (std::abs(rt) > floor_tol) {
    throw NumericError("pmd_mean_update: no convergence after " + std::to_string(iter) +
                       " iterations (residual " + std::to_string(rt) + ")");
  }

  residual(t);
  std::vector<double> u(n);
  double kkt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = sa.d[i] - w[i];
    kkt = std::max(kkt, std::abs(u[i] - sa.d[i] + std::exp(u[i] + t)));
  }
  auto res = detail::finish_update(sa, std::move(u));
  res.lambda = cfg.tau * cfg.tau * std::exp(t);
  res.kkt_residual = kkt;
  res.iterations = iter;
  return res;
}

inline PmdUpdateResult pmd_update(Method m, const DiscreteDistribution& pi_t,
                                  const RewardVector& r, const PmdConfig& cfg) {
  return m == Method::mean ? pmd_mean_update(pi_t, r, cfg) : pmd_part_update(pi_t, r, cfg);
}

enum class LambdaRegime { large_tau, small_tau };

/// Binary-reward asymptotics: p(1-p)/2 as tau -> inf, tau p(1-p) as tau -> 0.
inline double lambda_asymptotic(double p, double tau, LambdaRegime regime) {
  detail::require(p >= 0.0 && p <= 1.0, "lambda_asymptotic: p must lie in [0, 1]");
  detail::require(tau > 0.0, "lambda_asymptotic: tau must be positive");
  const double var = p * (1.0 - p);
  return regime == LambdaRegime::large_tau ? 0.5 * var : tau * var;
}

struct OracleOptions {
  double grad_tol = 1e-10;
  long max_iter = 1'000'000;
};

struct OracleResult {
  DiscreteDistribution policy;
  std::vector<double> log_ratio;
  double grad_norm = 0.0;
  long iterations = 0;
};

/// Maximizes E_pi r - tau KL(pi||pi_t) - (lambda / 2 tau) chi^2(pi||pi_t) over the simplex
/// by multiplicative updates on the log-ratio s = log(pi / pi_t). Each coordinate step is
/// the gradient divided by that coordinate's curvature, with the multiplier chosen so the
/// step keeps mass, capped at 1 per coordinate. Stops when the tangent-projected gradient
/// has Euclidean norm <= grad_tol.
inline OracleResult mixed_subproblem_oracle(const DiscreteDistribution& pi_t,
                                            const RewardVector& r, double tau, double lambda,
                                            const OracleOptions& opt = {}) {
  detail::require_same_size(pi_t.size(), r.size(), "mixed_subproblem_oracle");
  detail::require(pi_t.full_support(), "mixed_subproblem_oracle needs full support");
  detail::require(tau > 0.0 && std::isfinite(tau), "tau must be positive and finite");
  detail::require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and >= 0");
  const std::size_t n = pi_t.size();
  const auto log_pi = pi_t.log_probs();
  const double k = lambda / tau;
  std::vector<double> s(n, 0.0), g(n), h(n), buf(n), buf2(n);
  auto gradient = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      const double ratio = std::exp(s[i]);
      g[i] = r[i] - tau * (s[i] + 1.0) - k * (ratio - 1.0);
      h[i] = tau + k * ratio;
    }
    const double mean_g = pairwise_sum(g) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = (g[i] - mean_g) * (g[i] - mean_g);
    return std::sqrt(pairwise_sum(buf));
  };
  double norm = gradient();
  long it = 0;
  for (; norm > opt.grad_tol && it < opt.max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = std::exp(log_pi[i] + s[i]);
      buf[i] = wi * g[i] / h[i];
      buf2[i] = wi / h[i];
    }
    const double nu = pairwise_sum(buf) / pairwise_sum(buf2);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] += std::clamp((g[i] - nu) / h[i], -1.0, 1.0);
      buf[i] = log_pi[i] + s[i];
    }
    const double shift = log_sum_exp(buf);
    for (double& v : s) v -= shift;
    norm = gradient();
  }
  if (norm > opt.grad_tol) {
    throw NumericError("mixed_subproblem_oracle: gradient norm " + std::to_string(norm) +
                       " after " + std::to_string(it) + " iterations");
  }
  for (std::size_t i = 0; i < n; ++i) buf[i] = log_pi[i] + s[i];
  return {DiscreteDistribution::from_log_weights(buf), std::move(s), norm, it};
}

struct BinaryRatios {
  double rho_plus = 1.0;
  double rho_minus = 1.0;
};

namespace detail {
inline void require_binary_args(double p, double tau) {
  require(p >= 0.0 && p <= 1.0, "p must lie in [0, 1]");
  require(tau > 0.0 && std::isfinite(tau), "tau must be positive and finite");
}
}  // namespace detail

/// Exact ratios of the Boltzmann update for binary rewards with success probability p.
inline BinaryRatios binary_ratios_part(double p, double tau) {
  detail::require_binary_args(p, tau);
  if (p == 0.0 || p == 1.0) return {};
  const double e = std::exp(-1.0 / tau);
  const double denom = p + (1.0 - p) * e;
  return {1.0 / denom, e / denom};
}

/// Leading-order small-tau ratios of the mean-baselined update for binary rewards.
inline BinaryRatios binary_ratios_mean_asymptotic(double p, double tau) {
  detail::require_binary_args(p, tau);
  if (p == 0.0 || p == 1.0) return {};
  const double e = std::exp(-p / tau);
  return {1.0 / p - (1.0 - p) / p * e, e};
}

/// pi_t = [p, 1 - p] with rewards [1, 0].
inline std::pair<DiscreteDistribution, RewardVector> binary_instance(double p) {
  detail::require(p > 0.0 && p < 1.0, "binary instance needs p in (0, 1)");
  return {DiscreteDistribution({p, 1.0 - p}), RewardVector({1.0, 0.0})};
}

}  // namespace pmdlab
