#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pmdlab/lambertw.hpp"

using namespace pmdlab;

namespace {

// Bisection on a monotone function f with f(lo) < 0 < f(hi).
template <class F>
double bisect(F f, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(LambertW, Examples) {
  EXPECT_EQ(lambert_w0(0.0), 0.0);
  EXPECT_NEAR(lambert_w0(std::numbers::e), 1.0, 1e-15);
  const double omega = bisect([](double w) { return w * std::exp(w) - 1.0; }, 0.0, 1.0);
  EXPECT_NEAR(omega, 0.5671432904, 1e-10);
  EXPECT_NEAR(lambert_w0(1.0), omega, 1e-12);
}

TEST(LambertW, RejectsBadInput) {
  EXPECT_THROW(lambert_w0(-1e-300), InvalidArgument);
  EXPECT_THROW(lambert_w0(INFINITY), InvalidArgument);
  EXPECT_THROW(lambert_w0(NAN), InvalidArgument);
  EXPECT_THROW(lambert_w0_exp(INFINITY), InvalidArgument);
}

TEST(LambertWExp, Examples) {
  const double omega = bisect([](double w) { return w * std::exp(w) - 1.0; }, 0.0, 1.0);
  EXPECT_NEAR(lambert_w0_exp(0.0), omega, 1e-12);
  EXPECT_NEAR(lambert_w0_exp(1.0), 1.0, 1e-15);
  EXPECT_NEAR(lambert_w0_exp(1.0), lambert_w0(std::numbers::e), 1e-15);
  const double w1000 = bisect([](double w) { return w + std::log(w) - 1000.0; }, 990.0, 1000.0);
  EXPECT_NEAR(lambert_w0_exp(1000.0), w1000, 1e-10 * w1000);
  EXPECT_NEAR(w1000 + std::log(w1000), 1000.0, 1e-10);
  const double w1e6 = bisect([](double w) { return w + std::log(w) - 1e6; }, 1e6 - 20, 1e6);
  EXPECT_NEAR(lambert_w0_exp(1e6), w1e6, 1e-10 * w1e6);
}

TEST(LambertWExp, NegativeExponentsTrackExp) {
  EXPECT_NEAR(lambert_w0_exp(-40.0) / std::exp(-40.0), 1.0, 1e-12);
  EXPECT_EQ(lambert_w0_exp(-1000.0), 0.0);
}

TEST(LambertWProperty, IdentityAndBrackets) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 1e8);
  std::uniform_real_distribution<double> logu(-20.0, 20.0);
  for (int i = 0; i < 50000; ++i) {
    const double z = (i % 2 == 0) ? unif(rng) : std::exp(logu(rng));
    const double w = lambert_w0(z);
    ASSERT_LE(std::abs(w * std::exp(w) - z) / std::max(1.0, z), 1e-12) << z;
    ASSERT_GE(w, z / (1.0 + z) * (1 - 1e-15)) << z;
    ASSERT_LE(w, z * (1 + 1e-15)) << z;
    if (z > std::numbers::e) {
      ASSERT_GE(w, std::log(z) - std::log(std::log(z)) - 1e-13) << z;
      ASSERT_LE(w, std::log(z) + 1e-13) << z;
    }
  }
}

TEST(LambertWProperty, MonotoneAndConcave) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> logu(-10.0, 15.0);
  for (int i = 0; i < 20000; ++i) {
    double a = std::exp(logu(rng)), b = std::exp(logu(rng));
    if (a > b) std::swap(a, b);
    const double wa = lambert_w0(a), wb = lambert_w0(b);
    ASSERT_LE(wa, wb);
    ASSERT_GE(lambert_w0(0.5 * (a + b)), 0.5 * (wa + wb) - 1e-14 * wb);
  }
}

TEST(LambertWProperty, LogDomainConsistency) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> logu(std::log(1e-6), std::log(1e6));
  for (int i = 0; i < 20000; ++i) {
    const double z = std::exp(logu(rng));
    const double w = lambert_w0(z);
    ASSERT_NEAR(lambert_w0_exp(std::log(z)), w, 1e-10 * w) << z;
  }
}

TEST(LambertWProperty, LogDomainRelativeAccuracy) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> yu(1.0, 5000.0);
  for (int i = 0; i < 20000; ++i) {
    const double y = yu(rng);
    const double w = lambert_w0_exp(y);
    ASSERT_LE(std::abs(w + std::log(w) - y) / y, 1e-14) << y;
  }
}
