#pragma once

// Finite discrete distributions over an action set, bounded reward vectors,
// and the divergences used throughout the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pmdlab/error.hpp"
#include "pmdlab/numeric.hpp"

namespace pmdlab {

/// Inputs whose total mass is within this of 1 are accepted unchanged.
inline constexpr double kSimplexTol = 1e-12;
/// Inputs within this of the simplex are renormalized; worse ones are rejected.
inline constexpr double kRenormalizeTol = 1e-9;

/// Probability vector over a finite action set. Immutable after construction.
class DiscreteDistribution {
 public:
  explicit DiscreteDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    detail::require(!probs_.empty(), "distribution must have at least one entry");
    for (double p : probs_) {
      detail::require(std::isfinite(p) && p >= 0.0,
                      "distribution entries must be finite and nonnegative");
    }
    const double total = pairwise_sum(probs_);
    const double gap = std::abs(total - 1.0);
    if (gap > kRenormalizeTol) {
      throw InvalidArgument("distribution entries sum to " + std::to_string(total) +
                            ", not 1");
    }
    if (gap > kSimplexTol) {
      for (double& p : probs_) p /= total;
    }
  }

  static DiscreteDistribution uniform(std::size_t n) {
    detail::require(n > 0, "uniform distribution needs n > 0");
    return DiscreteDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  static DiscreteDistribution point_mass(std::size_t n, std::size_t k) {
    detail::require(k < n, "point mass index out of range");
    std::vector<double> p(n, 0.0);
    p[k] = 1.0;
    return DiscreteDistribution(std::move(p));
  }

  /// Softmax of unnormalized log-weights.
  static DiscreteDistribution from_log_weights(std::span<const double> log_w) {
    detail::require(!log_w.empty(), "softmax of an empty vector");
    const double m = *std::max_element(log_w.begin(), log_w.end());
    detail::require(std::isfinite(m), "softmax needs finite log-weights");
    std::vector<double> p(log_w.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_w[i] - m);
    const double total = pairwise_sum(p);
    for (double& v : p) v /= total;
    return DiscreteDistribution(std::move(p));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  bool full_support() const noexcept {
    return std::all_of(probs_.begin(), probs_.end(), [](double p) { return p > 0.0; });
  }

  std::vector<double> log_probs() const {
    std::vector<double> out(probs_.size());
    std::transform(probs_.begin(), probs_.end(), out.begin(),
                   [](double p) { return std::log(p); });
    return out;
  }

  friend bool operator==(const DiscreteDistribution&, const DiscreteDistribution&) = default;

 private:
  std::vector<double> probs_;
};

/// Per-action rewards, each in [0, 1].
class RewardVector {
 public:
  explicit RewardVector(std::vector<double> rewards) : rewards_(std::move(rewards)) {
    detail::require(!rewards_.empty(), "reward vector must be non-empty");
    for (double r : rewards_) {
      detail::require(std::isfinite(r) && r >= 0.0 && r <= 1.0, "rewards must lie in [0, 1]");
    }
  }

  std::size_t size() const noexcept { return rewards_.size(); }
  double operator[](std::size_t i) const { return rewards_[i]; }
  std::span<const double> values() const noexcept { return rewards_; }

  /// Exact membership of every entry in {0, 1}.
  bool is_binary() const noexcept {
    return std::all_of(rewards_.begin(), rewards_.end(),
                       [](double r) { return r == 0.0 || r == 1.0; });
  }

  bool is_constant() const noexcept {
    return std::all_of(rewards_.begin(), rewards_.end(),
                       [&](double r) { return r == rewards_.front(); });
  }

 private:
  std::vector<double> rewards_;
};

struct BanditState {
  std::string id;
  RewardVector rewards;
};

/// A set of prompts (states), each with its own reward vector, plus a
/// sampling distribution over states.
class BanditInstance {
 public:
  BanditInstance(std::vector<BanditState> states, DiscreteDistribution weights)
      : states_(std::move(states)), weights_(std::move(weights)) {
    detail::require(!states_.empty(), "bandit instance needs at least one state");
    detail::require(weights_.size() == states_.size(),
                    "state weights must have one entry per state");
  }

  /// Uniform weights over the given states.
  static BanditInstance with_uniform_weights(std::vector<BanditState> states) {
    detail::require(!states.empty(), "bandit instance needs at least one state");
    auto w = DiscreteDistribution::uniform(states.size());
    return BanditInstance(std::move(states), std::move(w));
  }

  std::size_t num_states() const noexcept { return states_.size(); }
  const BanditState& state(std::size_t s) const { return states_.at(s); }
  const std::vector<BanditState>& states() const noexcept { return states_; }
  const DiscreteDistribution& weights() const noexcept { return weights_; }

 private:
  std::vector<BanditState> states_;
  DiscreteDistribution weights_;
};

namespace detail {

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
  }
}

}  // namespace detail

/// Sum_y policy(y) r(y).
inline double expected_reward(const DiscreteDistribution& policy, const RewardVector& r) {
  detail::require_same_size(policy.size(), r.size(), "expected_reward");
  std::vector<double> terms(policy.size());
  for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = policy[i] * r[i];
  return pairwise_sum(terms);
}

/// KL(p || q) with 0 log 0 = 0. Throws if q(y) = 0 where p(y) > 0.
inline double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  detail::require_same_size(p.size(), q.size(), "kl_divergence");
  std::vector<double> terms(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw InvalidArgument("kl_divergence: q has zero mass where p is positive");
    terms[i] = p[i] * std::log(p[i] / q[i]);
  }
  return std::max(0.0, pairwise_sum(terms));
}

/// chi^2(p || q) = sum_y q(y) (p(y)/q(y) - 1)^2. Requires q to have full support.
inline double chi2_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  detail::require_same_size(p.size(), q.size(), "chi2_divergence");
  std::vector<double> terms(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (q[i] == 0.0) throw InvalidArgument("chi2_divergence: q must have full support");
    const double d = p[i] - q[i];
    terms[i] = d * d / q[i];
  }
  return pairwise_sum(terms);
}

/// Total variation distance, 1/2 sum |p - q|.
inline double tv_distance(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  detail::require_same_size(p.size(), q.size(), "tv_distance");
  std::vector<double> terms(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) terms[i] = std::abs(p[i] - q[i]);
  return std::min(1.0, 0.5 * pairwise_sum(terms));
}

/// Shannon entropy in nats.
inline double entropy(const DiscreteDistribution& p) {
  std::vector<double> terms(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) terms[i] = -p[i] * std::log(p[i]);
  }
  return pairwise_sum(terms);
}

}  // namespace pmdlab
