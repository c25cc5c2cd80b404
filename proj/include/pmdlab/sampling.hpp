#pragma once

// Rollout sampling, leave-one-out regression targets, target mismatch, and
// the Monte Carlo sweep over (p, n) cells for binary rewards.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pmdlab/contraction.hpp"
#include "pmdlab/dist.hpp"
#include "pmdlab/error.hpp"
#include "pmdlab/numeric.hpp"
#include "pmdlab/parallel.hpp"
#include "pmdlab/rng.hpp"
#include "pmdlab/solvers.hpp"

namespace pmdlab {

struct RolloutBatch {
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  DiscreteDistribution sampler;
  std::uint64_t seed = 0;
  std::uint64_t trial_index = 0;

  std::size_t size() const noexcept { return actions.size(); }
};

/// Draws `n` actions from `sampler` with `rng` by inverse CDF.
inline std::vector<std::size_t> sample_actions(const DiscreteDistribution& sampler, std::size_t n,
                                               Rng& rng) {
  const std::size_t k = sampler.size();
  std::vector<double> cdf(k);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < k; ++i) {
    acc += sampler[i];
    cdf[i] = acc;
    if (sampler[i] > 0.0) last_positive = i;
  }
  std::vector<std::size_t> out(n);
  for (auto& a : out) {
    const double u = uniform01(rng) * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    a = std::min(static_cast<std::size_t>(it - cdf.begin()), last_positive);
  }
  return out;
}

/// n i.i.d. actions from pi_t on the stream keyed by (seed, trial_index).
inline RolloutBatch sample_rollouts(const DiscreteDistribution& pi_t, const RewardVector& r,
                                    std::size_t n, std::uint64_t seed, std::uint64_t trial_index) {
  detail::require(n >= 2, "sample_rollouts: n must be >= 2");
  detail::require_same_size(pi_t.size(), r.size(), "sample_rollouts");
  Rng rng = make_rng(seed, trial_index);
  RolloutBatch b{sample_actions(pi_t, n, rng), {}, pi_t, seed, trial_index};
  b.rewards.resize(n);
  for (std::size_t i = 0; i < n; ++i) b.rewards[i] = r[b.actions[i]];
  return b;
}

/// Leave-one-out targets: mean (r_i - mean_{j!=i} r_j)/tau; part r_i/tau - log mean_{j!=i} e^{r_j/tau}.
inline std::vector<double> loo_targets(std::span<const double> rewards, double tau, Method method) {
  detail::require(rewards.size() >= 2, "loo_targets: need at least two samples");
  detail::require(tau > 0.0 && std::isfinite(tau), "tau must be positive and finite");
  const std::size_t n = rewards.size();
  std::vector<double> out(n);
  if (method == Method::mean) {
    // Offsets from the first reward keep constant groups exactly at zero.
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = rewards[i] - rewards[0];
    const double total = pairwise_sum(c);
    const double m = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) out[i] = (c[i] - (total - c[i]) / m) / tau;
    return out;
  }
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) scaled[i] = rewards[i] / tau;
  const auto lme = leave_one_out_log_mean_exp(scaled);
  for (std::size_t i = 0; i < n; ++i) out[i] = scaled[i] - lme[i];
  return out;
}

inline std::vector<double> loo_targets(const RolloutBatch& batch, double tau, Method method) {
  return loo_targets(batch.rewards, tau, method);
}

/// s*(y) = log(pi*_{t+1}(y) / pi_t(y)) of the exact population update.
inline std::vector<double> ideal_target(const DiscreteDistribution& pi_t, const RewardVector& r,
                                        double tau, Method method) {
  return pmd_update(method, pi_t, r, PmdConfig{tau}).log_ratio;
}

struct MismatchStats {
  double delta_bar_sq = 0.0;
  /// Mean of squared mismatch over samples with reward above E_{pi_t} r (resp. not above);
  /// 0 when the class is empty.
  double pos = 0.0;
  double neg = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Delta_i = s~_{-i}(y_i) - s*(y_i) given a precomputed ideal target.
inline MismatchStats target_mismatch(const RolloutBatch& batch, const RewardVector& r,
                                     double tau, Method method, std::span<const double> ideal) {
  detail::require_same_size(ideal.size(), r.size(), "target_mismatch");
  const auto targets = loo_targets(batch, tau, method);
  const double mean_r = expected_reward(batch.sampler, r);
  const std::size_t n = batch.size();
  std::vector<double> all(n), pos, neg;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = batch.actions[i];
    const double d = targets[i] - ideal[a];
    all[i] = d * d;
    (r[a] > mean_r ? pos : neg).push_back(all[i]);
  }
  MismatchStats s;
  s.delta_bar_sq = pairwise_sum(all) / static_cast<double>(n);
  s.n_pos = pos.size();
  s.n_neg = neg.size();
  if (!pos.empty()) s.pos = pairwise_sum(pos) / static_cast<double>(pos.size());
  if (!neg.empty()) s.neg = pairwise_sum(neg) / static_cast<double>(neg.size());
  return s;
}

inline MismatchStats target_mismatch(const RolloutBatch& batch, const RewardVector& r,
                                     double tau, Method method) {
  const auto ideal = ideal_target(batch.sampler, r, tau, method);
  return target_mismatch(batch, r, tau, method, ideal);
}

struct SweepConfig {
  std::vector<double> p_grid{0.01, 0.02, 0.05, 0.1, 0.2};
  std::vector<long> n_grid{4, 8, 16, 64, 256, 1024};
  double tau = 0.05;
  long trials = 100;
  double delta = 0.05;
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  void validate() const {
    detail::require(std::isfinite(tau) && tau > 0.0, "tau must be positive and finite");
    detail::require(trials >= 1, "trials must be >= 1");
    detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    for (double p : p_grid) detail::require(p > 0.0 && p < 1.0, "p_grid entries must lie in (0, 1)");
    for (long n : n_grid) detail::require(n >= 2, "n_grid entries must be >= 2");
  }
};

struct CellStats {
  Method method = Method::mean;
  double p = 0.0;
  long n = 0;
  double tau = 0.0;
  long trials = 0;
  double mean_dbar2 = 0.0;
  double std_dbar2 = 0.0;
  /// Averages over the trials whose batch contains at least one sample of that sign.
  double pos_err = 0.0;
  double pos_std = 0.0;
  long pos_trials = 0;
  double neg_err = 0.0;
  double neg_std = 0.0;
  long neg_trials = 0;
  /// e^{B_+} times mean_dbar2.
  double scaled_err = 0.0;
  double bound = 0.0;
  long violations = 0;
  /// Trials whose rewards were all 0 or all 1.
  long degenerate = 0;
  /// Fraction of trials with max_i |p_{-i} - p| <= epsilon_n.
  double eps_coverage = 0.0;
};

struct EstimationReport {
  SweepConfig config;
  /// Ordered by p, then n, then method (mean before part).
  std::vector<CellStats> cells;

  const CellStats* find(Method m, double p, long n) const {
    for (const auto& c : cells) {
      if (c.method == m && c.p == p && c.n == n) return &c;
    }
    return nullptr;
  }
};

namespace detail {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  const double n = static_cast<double>(xs.size());
  const double m = pairwise_sum(xs) / n;
  if (xs.size() < 2) return {m, 0.0};
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - m) * (xs[i] - m);
  return {m, std::sqrt(pairwise_sum(sq) / (n - 1.0))};
}

struct TrialOutcome {
  MismatchStats stats[2];
  bool degenerate = false;
  bool covered = false;
};

}  // namespace detail

/// Stream seed of the (p, n) cell; independent of the rest of the grid.
inline std::uint64_t cell_seed(std::uint64_t seed, double p, long n) {
  return derive_seed(derive_seed(seed, p), static_cast<std::uint64_t>(n));
}

/// Binary two-action instance pi_t = [p, 1-p], r = [1, 0] per cell; both methods see the
/// same batches. Results do not depend on cfg.jobs.
inline EstimationReport estimation_error_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const std::size_t P = cfg.p_grid.size(), N = cfg.n_grid.size();
  const std::size_t T = static_cast<std::size_t>(cfg.trials);
  const std::size_t cells = P * N;

  struct CellSetup {
    DiscreteDistribution pi;
    RewardVector r;
    std::vector<double> ideal[2];
  };
  std::vector<CellSetup> setup;
  setup.reserve(P);
  for (double p : cfg.p_grid) {
    auto [pi, r] = binary_instance(p);
    CellSetup cs{pi, r, {}};
    cs.ideal[0] = ideal_target(pi, r, cfg.tau, Method::mean);
    cs.ideal[1] = ideal_target(pi, r, cfg.tau, Method::part);
    setup.push_back(std::move(cs));
  }

  std::vector<detail::TrialOutcome> outcomes(cells * T);
  parallel_for(outcomes.size(), cfg.jobs, [&](std::size_t task) {
    const std::size_t cell = task / T, trial = task % T;
    const std::size_t pi_idx = cell / N, n_idx = cell % N;
    const double p = cfg.p_grid[pi_idx];
    const long n = cfg.n_grid[n_idx];
    const auto& cs = setup[pi_idx];
    const auto batch = sample_rollouts(cs.pi, cs.r, static_cast<std::size_t>(n),
                                       cell_seed(cfg.seed, p, n), trial);
    auto& out = outcomes[task];
    out.stats[0] = target_mismatch(batch, cs.r, cfg.tau, Method::mean, cs.ideal[0]);
    out.stats[1] = target_mismatch(batch, cs.r, cfg.tau, Method::part, cs.ideal[1]);
    const double ones = pairwise_sum(batch.rewards);
    out.degenerate = ones == 0.0 || ones == static_cast<double>(n);
    const double eps = epsilon_n(p, n, cfg.delta);
    double worst = 0.0;
    for (double ri : batch.rewards) {
      worst = std::max(worst, std::abs((ones - ri) / static_cast<double>(n - 1) - p));
    }
    out.covered = worst <= eps;
  });

  EstimationReport rep{cfg, {}};
  rep.cells.reserve(cells * 2);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const double p = cfg.p_grid[cell / N];
    const long n = cfg.n_grid[cell % N];
    for (int m = 0; m < 2; ++m) {
      const Method method = m == 0 ? Method::mean : Method::part;
      std::vector<double> dbar, pos, neg;
      long degenerate = 0, covered = 0;
      for (std::size_t t = 0; t < T; ++t) {
        const auto& o = outcomes[cell * T + t];
        const auto& s = o.stats[m];
        dbar.push_back(s.delta_bar_sq);
        if (s.n_pos > 0) pos.push_back(s.pos);
        if (s.n_neg > 0) neg.push_back(s.neg);
        degenerate += o.degenerate;
        covered += o.covered;
      }
      CellStats c;
      c.method = method;
      c.p = p;
      c.n = n;
      c.tau = cfg.tau;
      c.trials = cfg.trials;
      const auto d = detail::mean_std(dbar);
      c.mean_dbar2 = d.mean;
      c.std_dbar2 = d.std;
      const auto ps = detail::mean_std(pos);
      c.pos_err = ps.mean;
      c.pos_std = ps.std;
      c.pos_trials = static_cast<long>(pos.size());
      const auto ns = detail::mean_std(neg);
      c.neg_err = ns.mean;
      c.neg_std = ns.std;
      c.neg_trials = static_cast<long>(neg.size());
      c.scaled_err = std::exp(log_ratio_bounds(p, cfg.tau, method).B_plus) * c.mean_dbar2;
      c.bound = mismatch_bound(p, n, cfg.delta, cfg.tau, mismatch_kind(method));
      c.violations = static_cast<long>(
          std::count_if(dbar.begin(), dbar.end(), [&](double v) { return v > c.bound; }));
      c.degenerate = degenerate;
      c.eps_coverage = static_cast<double>(covered) / static_cast<double>(T);
      rep.cells.push_back(c);
    }
  }
  return rep;
}

}  // namespace pmdlab
