#pragma once

// Small numerical kernels shared across modules: stable log-sum-exp,
// pairwise summation, and series expansions near zero.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace pmdlab {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Pairwise (cascade) summation. Result depends only on the order of `xs`.
inline double pairwise_sum(std::span<const double> xs) {
  constexpr std::size_t kBlock = 16;
  if (xs.size() <= kBlock) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

/// log(sum_i exp(xs[i])). Returns -inf for an empty input or all -inf.
inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// log(exp(a) + exp(b)).
inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// exp(x) - 1 - x, accurate for small |x|.
inline double expm1_minus_x(double x) {
  if (std::abs(x) < 1e-2) {
    const double x2 = x * x;
    return x2 * (0.5 + x * (1.0 / 6 + x * (1.0 / 24 + x * (1.0 / 120 + x * (1.0 / 720)))));
  }
  return std::expm1(x) - x;
}

/// log(mean_j exp(xs[j])) over j != i, for every i, in O(n). Terms are shifted by the
/// maximum of the remaining entries, so every partial sum is >= 1 and nothing cancels.
inline std::vector<double> leave_one_out_log_mean_exp(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<double> out(n, kNegInf);
  if (n < 2) return out;
  std::size_t top = 0;
  for (std::size_t i = 1; i < n; ++i) if (xs[i] > xs[top]) top = i;
  const double m = xs[top];
  std::vector<double> e(n), prefix(n + 1, 0.0), suffix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) e[i] = std::exp(xs[i] - m);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + e[i];
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + e[i];
  const double log_others = std::log(static_cast<double>(n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    if (i != top) out[i] = m + std::log(prefix[i] + suffix[i + 1]) - log_others;
  }
  std::size_t second = top == 0 ? 1 : 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != top && xs[i] > xs[second]) second = i;
  }
  const double m2 = xs[second];
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != top) s += std::exp(xs[i] - m2);
  }
  out[top] = m2 + std::log(s) - log_others;
  return out;
}

}  // namespace pmdlab
