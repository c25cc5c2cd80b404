#pragma once

// Finite-sample policy mirror descent on tabular softmax policies: each
// global step snapshots pi_t, samples K rollouts per state, builds
// leave-one-out targets and fits log-ratios by full-batch gradient descent
// with a hard log-ratio clip. An on-policy RLOO gradient step is included as
// the baseline.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmdlab/contraction.hpp"
#include "pmdlab/dist.hpp"
#include "pmdlab/error.hpp"
#include "pmdlab/numeric.hpp"
#include "pmdlab/parallel.hpp"
#include "pmdlab/rng.hpp"
#include "pmdlab/sampling.hpp"
#include "pmdlab/solvers.hpp"

namespace pmdlab {

enum class TrainMethod { pmd_mean, pmd_part, rloo_pg };
enum class AdvantageKind { grpo, loo, part };

inline std::string_view to_string(TrainMethod m) {
  switch (m) {
    case TrainMethod::pmd_mean: return "pmd_mean";
    case TrainMethod::pmd_part: return "pmd_part";
    case TrainMethod::rloo_pg: return "rloo_pg";
  }
  return "?";
}

inline TrainMethod parse_train_method(std::string_view s) {
  if (s == "pmd_mean") return TrainMethod::pmd_mean;
  if (s == "pmd_part") return TrainMethod::pmd_part;
  if (s == "rloo_pg") return TrainMethod::rloo_pg;
  throw InvalidArgument("unknown training method '" + std::string(s) +
                        "' (expected pmd_mean, pmd_part or rloo_pg)");
}

inline constexpr double kGrpoStdGuard = 1e-6;

/// Group-relative advantages for one prompt's K rewards.
inline std::vector<double> advantage_estimates(std::span<const double> rewards, AdvantageKind kind,
                                               double tau) {
  const std::size_t k = rewards.size();
  detail::require(k >= 2, "advantage_estimates: need K >= 2");
  std::vector<double> out(k);
  switch (kind) {
    case AdvantageKind::grpo: {
      std::vector<double> c(k), sq(k);
      for (std::size_t i = 0; i < k; ++i) c[i] = rewards[i] - rewards[0];
      const double mean = pairwise_sum(c) / static_cast<double>(k);
      for (std::size_t i = 0; i < k; ++i) sq[i] = (c[i] - mean) * (c[i] - mean);
      const double sd = std::sqrt(pairwise_sum(sq) / static_cast<double>(k));
      for (std::size_t i = 0; i < k; ++i) out[i] = (c[i] - mean) / std::max(sd, kGrpoStdGuard);
      return out;
    }
    case AdvantageKind::loo:
      out = loo_targets(rewards, 1.0, Method::mean);
      return out;
    case AdvantageKind::part:
      out = loo_targets(rewards, tau, Method::part);
      for (double& v : out) v *= tau;
      return out;
  }
  return out;
}

/// One logit row per state. Logits are kept normalized (log-softmax) so that
/// rows can be compared directly.
class TabularPolicy {
 public:
  TabularPolicy(std::size_t states, std::size_t actions)
      : states_(states), actions_(actions), logits_(states * actions) {
    detail::require(states > 0 && actions > 0, "tabular policy needs states and actions");
    const double u = -std::log(static_cast<double>(actions));
    std::fill(logits_.begin(), logits_.end(), u);
  }

  TabularPolicy(std::size_t states, std::size_t actions, std::span<const double> logits)
      : TabularPolicy(states, actions) {
    detail::require(logits.size() == states * actions, "logit matrix has the wrong size");
    for (std::size_t s = 0; s < states; ++s) set_row(s, logits.subspan(s * actions, actions));
  }

  std::size_t num_states() const noexcept { return states_; }
  std::size_t num_actions() const noexcept { return actions_; }

  /// Log-probabilities of state s.
  std::span<const double> log_probs(std::size_t s) const {
    return std::span<const double>(logits_).subspan(s * actions_, actions_);
  }

  DiscreteDistribution policy(std::size_t s) const {
    return DiscreteDistribution::from_log_weights(log_probs(s));
  }

  /// Replaces a row by the log-softmax of `logits`.
  void set_row(std::size_t s, std::span<const double> logits) {
    detail::require(logits.size() == actions_, "logit row has the wrong size");
    const double lse = log_sum_exp(logits);
    detail::require(std::isfinite(lse), "logit row must be finite");
    for (std::size_t a = 0; a < actions_; ++a) {
      logits_[s * actions_ + a] = logits[a] - lse;
      detail::require(std::isfinite(logits_[s * actions_ + a]), "logit row must be finite");
    }
  }

 private:
  std::size_t states_, actions_;
  std::vector<double> logits_;
};

struct TrainConfig {
  TrainMethod method = TrainMethod::pmd_mean;
  double tau = 0.05;
  long rollouts_per_state = 8;
  long inner_steps = 200;
  double inner_step_size = 0.5;
  long global_steps = 60;
  std::uint64_t seed = 0;
  /// Extra warm-started descent steps used to measure the optimization gap;
  /// 0 means 4 * inner_steps.
  long probe_steps = 0;
  bool clip = true;
  double clip_headroom = kClipHeadroom;
  /// Each state's batch is split into this many contiguous chunks fitted one after the
  /// other (targets and log-ratios stay anchored at the snapshot).
  long mini_steps = 1;
  unsigned jobs = 1;

  void validate() const {
    detail::require(std::isfinite(tau) && tau > 0.0, "tau must be positive and finite");
    detail::require(rollouts_per_state >= 2, "rollouts_per_state (K) must be >= 2");
    detail::require(inner_steps >= 1, "inner_steps must be >= 1");
    detail::require(std::isfinite(inner_step_size) && inner_step_size > 0.0,
                    "inner_step_size must be positive");
    detail::require(global_steps >= 0, "global_steps must be >= 0");
    detail::require(probe_steps >= 0, "probe_steps must be >= 0");
    detail::require(clip_headroom >= 1.0, "clip_headroom must be >= 1");
    detail::require(mini_steps >= 1 && mini_steps <= rollouts_per_state,
                    "mini_steps must lie in [1, K]");
  }

  long effective_probe_steps() const { return probe_steps > 0 ? probe_steps : 4 * inner_steps; }
};

struct ClipLevel {
  double lo = -std::numeric_limits<double>::infinity();  // -B
  double hi = std::numeric_limits<double>::infinity();   // B_+
};

/// Per-state clip [-B, B_+]: the binary-reward log-ratio bounds at the state's success
/// probability, widened to cover the exact ideal target, times the headroom.
inline ClipLevel clip_level(const DiscreteDistribution& pi_t, const RewardVector& r, double tau,
                            Method method, double headroom) {
  const auto ideal = ideal_target(pi_t, r, tau, method);
  double lo = 0.0, hi = 0.0;
  for (double v : ideal) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (r.is_binary() && !r.is_constant()) {
    const double p = expected_reward(pi_t, r);
    if (p > 0.0 && p < 1.0) {
      const auto b = log_ratio_bounds(p, tau, method);
      lo = std::min(lo, -b.B);
      hi = std::max(hi, b.B_plus);
    }
  }
  return {headroom * lo, headroom * hi};
}

struct StateFit {
  std::vector<double> log_ratio;  // log(pi_fit / pi_t) for every action
  double loss = 0.0;
  std::vector<double> loss_history;
};

namespace detail {

inline double weighted_loss(std::span<const double> s, std::span<const double> weights,
                            std::span<const double> targets) {
  std::vector<double> terms(s.size());
  for (std::size_t a = 0; a < s.size(); ++a) {
    const double d = s[a] - targets[a];
    terms[a] = 0.5 * weights[a] * d * d;
  }
  return pairwise_sum(terms);
}

// Shifts s by a constant and clips it to [lo, hi] so that E_{pi_t} e^s = 1.
inline void project_log_ratio(std::span<double> s, std::span<const double> pi_t, ClipLevel clip) {
  const auto [mn, mx] = std::minmax_element(s.begin(), s.end());
  if (*mn >= clip.lo && *mx <= clip.hi) return;
  auto mass = [&](double c) {
    double m = 0.0;
    for (std::size_t a = 0; a < s.size(); ++a) m += pi_t[a] * std::exp(std::clamp(s[a] + c, clip.lo, clip.hi));
    return m - 1.0;
  };
  double a = clip.lo - *mx, b = clip.hi - *mn;
  for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
    const double mid = 0.5 * (a + b);
    (mass(mid) < 0.0 ? a : b) = mid;
  }
  const double c = 0.5 * (a + b);
  for (double& v : s) v = std::clamp(v + c, clip.lo, clip.hi);
}

inline void log_ratio_of(std::span<const double> theta, std::span<const double> log_pi_t,
                         std::span<double> s) {
  const double lse = log_sum_exp(theta);
  for (std::size_t a = 0; a < s.size(); ++a) s[a] = theta[a] - lse - log_pi_t[a];
}

}  // namespace detail

/// Gradient descent on 1/2 sum_a w_a (s(a) - t_a)^2 over the logits of one state, starting
/// from the snapshot (s = 0), s(a) = log(pi(a) / pi_t(a)). With clipping, the log-ratio
/// is projected onto [lo, hi] after every step.
inline StateFit fit_state(std::span<const double> log_pi_t, std::span<const double> weights,
                          std::span<const double> targets, std::span<const double> start,
                          long steps, double lr, const ClipLevel* clip, bool keep_history = false) {
  const std::size_t n = log_pi_t.size();
  detail::require(weights.size() == n && targets.size() == n && start.size() == n,
                  "fit_state: dimension mismatch");
  std::vector<double> pi_t(n), theta(n), s(start.begin(), start.end()), pi(n), g(n);
  for (std::size_t a = 0; a < n; ++a) {
    pi_t[a] = std::exp(log_pi_t[a]);
    theta[a] = log_pi_t[a] + s[a];
  }
  StateFit fit;
  if (keep_history) fit.loss_history.push_back(detail::weighted_loss(s, weights, targets));
  for (long it = 0; it < steps; ++it) {
    const double lse = log_sum_exp(theta);
    double total = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      pi[a] = std::exp(theta[a] - lse);
      s[a] = theta[a] - lse - log_pi_t[a];
      g[a] = weights[a] * (s[a] - targets[a]);
      total += g[a];
    }
    for (std::size_t a = 0; a < n; ++a) theta[a] -= lr * (g[a] - pi[a] * total);
    detail::log_ratio_of(theta, log_pi_t, s);
    if (clip) {
      detail::project_log_ratio(s, pi_t, *clip);
      for (std::size_t a = 0; a < n; ++a) theta[a] = log_pi_t[a] + s[a];
    }
    if (keep_history) fit.loss_history.push_back(detail::weighted_loss(s, weights, targets));
  }
  detail::log_ratio_of(theta, log_pi_t, s);
  fit.loss = detail::weighted_loss(s, weights, targets);
  if (!std::isfinite(fit.loss)) throw NumericError("fit_state: non-finite loss");
  fit.log_ratio = std::move(s);
  return fit;
}

struct GroupedBatch {
  std::vector<double> weights;  // count(a) / K
  std::vector<double> targets;  // mean target of the samples of action a (0 if unsampled)
};

/// Collapses per-sample targets into per-action weights and mean targets; the empirical
/// loss 1/(2m) sum_i (s(y_i) - t_i)^2 over samples [first, last) differs from the grouped
/// one by a constant.
inline GroupedBatch group_targets(const RolloutBatch& batch, std::span<const double> targets,
                                  std::size_t actions, std::size_t first = 0,
                                  std::size_t last = static_cast<std::size_t>(-1)) {
  last = std::min(last, batch.size());
  GroupedBatch g{std::vector<double>(actions, 0.0), std::vector<double>(actions, 0.0)};
  std::vector<double> count(actions, 0.0);
  for (std::size_t i = first; i < last; ++i) {
    count[batch.actions[i]] += 1.0;
    g.targets[batch.actions[i]] += targets[i];
  }
  const double m = static_cast<double>(last - first);
  for (std::size_t a = 0; a < actions; ++a) {
    if (count[a] > 0.0) g.targets[a] /= count[a];
    g.weights[a] = count[a] / m;
  }
  return g;
}

inline double empirical_loss(const RolloutBatch& batch, std::span<const double> targets,
                             std::span<const double> log_ratio) {
  std::vector<double> terms(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double d = log_ratio[batch.actions[i]] - targets[i];
    terms[i] = 0.5 * d * d;
  }
  return pairwise_sum(terms) / static_cast<double>(batch.size());
}

struct ErmFitResult {
  TabularPolicy policy;
  std::vector<double> loss;     // achieved empirical loss per state
  std::vector<double> eps_opt;  // loss minus the loss after extra probe steps, per state
  std::vector<ClipLevel> clip;
};

/// Fits every state's log-ratio to its leave-one-out targets starting from the snapshot.
inline ErmFitResult erm_fit(const TabularPolicy& snapshot, const BanditInstance& instance,
                            std::span<const RolloutBatch> batches, const TrainConfig& cfg) {
  cfg.validate();
  detail::require(cfg.method != TrainMethod::rloo_pg, "erm_fit: rloo_pg has no regression target");
  const std::size_t S = snapshot.num_states(), A = snapshot.num_actions();
  detail::require(batches.size() == S && instance.num_states() == S,
                  "erm_fit: one batch per state required");
  const Method m = cfg.method == TrainMethod::pmd_mean ? Method::mean : Method::part;
  ErmFitResult out{snapshot, std::vector<double>(S), std::vector<double>(S),
                   std::vector<ClipLevel>(S)};
  std::vector<std::vector<double>> rows(S);
  std::vector<char> changed(S, 0);
  parallel_for(S, cfg.jobs, [&](std::size_t s) {
    const auto& r = instance.state(s).rewards;
    const auto log_pi = snapshot.log_probs(s);
    const auto targets = loo_targets(batches[s], cfg.tau, m);
    ClipLevel clip;
    if (cfg.clip) clip = clip_level(snapshot.policy(s), r, cfg.tau, m, cfg.clip_headroom);
    out.clip[s] = clip;
    // All-zero targets: the snapshot is already optimal.
    if (std::ranges::all_of(targets, [](double v) { return v == 0.0; })) return;
    const ClipLevel* cp = cfg.clip ? &clip : nullptr;
    const auto K = batches[s].size(), chunks = static_cast<std::size_t>(cfg.mini_steps);
    StateFit fit{std::vector<double>(A, 0.0), 0.0, {}};
    GroupedBatch grouped;
    for (std::size_t c = 0; c < chunks; ++c) {
      grouped = group_targets(batches[s], targets, A, c * K / chunks, (c + 1) * K / chunks);
      fit = fit_state(log_pi, grouped.weights, grouped.targets, fit.log_ratio, cfg.inner_steps,
                      cfg.inner_step_size, cp);
    }
    auto probe = fit_state(log_pi, grouped.weights, grouped.targets, fit.log_ratio,
                           cfg.effective_probe_steps(), cfg.inner_step_size, cp);
    out.loss[s] = empirical_loss(batches[s], targets, fit.log_ratio);
    out.eps_opt[s] = std::max(0.0, fit.loss - probe.loss);
    rows[s].resize(A);
    for (std::size_t a = 0; a < A; ++a) rows[s][a] = log_pi[a] + fit.log_ratio[a];
    changed[s] = 1;
  });
  for (std::size_t s = 0; s < S; ++s) {
    if (changed[s]) out.policy.set_row(s, rows[s]);
  }
  return out;
}

struct StepRecord {
  long step = 0;
  double J = 0.0;
  double emp_reward = std::numeric_limits<double>::quiet_NaN();
  double min_logratio = std::numeric_limits<double>::quiet_NaN();
  double max_logratio = std::numeric_limits<double>::quiet_NaN();
  /// Minimum over the sampled (state, action) pairs only.
  double min_logratio_sampled = std::numeric_limits<double>::quiet_NaN();
  double lambda_mean = 0.0;
  double entropy = 0.0;
  double eps_opt = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
};

struct TrainTrajectory {
  TrainConfig config;
  /// global_steps + 1 records; the last one describes the final policy only.
  std::vector<StepRecord> steps;
  double final_J() const { return steps.empty() ? 0.0 : steps.back().J; }
};

/// J(pi) = sum_s w_s E_{pi(s)} r_s.
inline double expected_return(const TabularPolicy& policy, const BanditInstance& instance) {
  std::vector<double> terms(instance.num_states());
  for (std::size_t s = 0; s < terms.size(); ++s) {
    terms[s] = instance.weights()[s] * expected_reward(policy.policy(s), instance.state(s).rewards);
  }
  return pairwise_sum(terms);
}

inline void check_compatible(const TabularPolicy& policy, const BanditInstance& instance) {
  detail::require(policy.num_states() == instance.num_states(),
                  "policy and instance disagree on the number of states");
  for (const auto& st : instance.states()) {
    detail::require(st.rewards.size() == policy.num_actions(),
                    "state '" + st.id + "' has the wrong number of actions");
  }
}

inline TrainTrajectory train_loop(const BanditInstance& instance, const TabularPolicy& initial,
                                  const TrainConfig& cfg) {
  cfg.validate();
  check_compatible(initial, instance);
  const std::size_t S = instance.num_states(), A = initial.num_actions();
  const auto K = static_cast<std::size_t>(cfg.rollouts_per_state);
  const auto& w = instance.weights();
  using clock = std::chrono::steady_clock;

  TrainTrajectory traj{cfg, {}};
  TabularPolicy pi = initial;
  std::vector<double> ent(S), lam(S);
  auto describe = [&](long t) {
    StepRecord rec;
    rec.step = t;
    rec.J = expected_return(pi, instance);
    parallel_for(S, cfg.jobs, [&](std::size_t s) {
      const auto p = pi.policy(s);
      ent[s] = entropy(p);
      lam[s] = p.full_support()
                   ? pmd_mean_update(p, instance.state(s).rewards, PmdConfig{cfg.tau}).lambda
                   : 0.0;
    });
    for (std::size_t s = 0; s < S; ++s) {
      ent[s] *= w[s];
      lam[s] *= w[s];
    }
    rec.entropy = pairwise_sum(ent);
    rec.lambda_mean = pairwise_sum(lam);
    return rec;
  };

  for (long t = 0; t < cfg.global_steps; ++t) {
    const auto start = clock::now();
    StepRecord rec = describe(t);
    std::vector<RolloutBatch> batches;
    batches.reserve(S);
    std::vector<double> emp(S);
    for (std::size_t s = 0; s < S; ++s) {
      batches.push_back(sample_rollouts(pi.policy(s), instance.state(s).rewards, K, cfg.seed,
                                        static_cast<std::uint64_t>(t) * S + s));
      emp[s] = w[s] * pairwise_sum(batches.back().rewards) / static_cast<double>(K);
    }
    rec.emp_reward = pairwise_sum(emp);

    TabularPolicy next = pi;
    if (cfg.method == TrainMethod::rloo_pg) {
      for (std::size_t s = 0; s < S; ++s) {
        const auto adv = advantage_estimates(batches[s].rewards, AdvantageKind::loo, cfg.tau);
        const auto row = pi.log_probs(s);
        std::vector<double> theta(row.begin(), row.end());
        for (std::size_t i = 0; i < K; ++i) {
          theta[batches[s].actions[i]] += cfg.inner_step_size * adv[i] / static_cast<double>(K);
        }
        next.set_row(s, theta);
      }
    } else {
      auto fit = erm_fit(pi, instance, batches, cfg);
      std::vector<double> eps(S);
      for (std::size_t s = 0; s < S; ++s) eps[s] = w[s] * fit.eps_opt[s];
      rec.eps_opt = pairwise_sum(eps);
      next = std::move(fit.policy);
    }

    double mn = std::numeric_limits<double>::infinity(), mx = -mn, ms = mn;
    for (std::size_t s = 0; s < S; ++s) {
      const auto a = pi.log_probs(s), b = next.log_probs(s);
      for (std::size_t j = 0; j < A; ++j) {
        mn = std::min(mn, b[j] - a[j]);
        mx = std::max(mx, b[j] - a[j]);
      }
      for (auto y : batches[s].actions) ms = std::min(ms, b[y] - a[y]);
    }
    rec.min_logratio = mn;
    rec.min_logratio_sampled = ms;
    rec.max_logratio = mx;
    pi = std::move(next);
    rec.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
    traj.steps.push_back(rec);
  }
  traj.steps.push_back(describe(cfg.global_steps));
  return traj;
}

inline TrainTrajectory train_loop(const BanditInstance& instance, const TrainConfig& cfg) {
  const std::size_t A = instance.state(0).rewards.size();
  return train_loop(instance, TabularPolicy(instance.num_states(), A), cfg);
}

/// `states` prompts with `actions` actions each; state s has k_s in [k_min, k_max] correct
/// actions at distinct random positions (reward 1), the rest reward 0.
inline BanditInstance standard_instance(std::uint64_t seed, std::size_t states = 20,
                                        std::size_t actions = 20, std::size_t k_min = 1,
                                        std::size_t k_max = 6) {
  detail::require(states > 0 && actions >= 2, "standard_instance: need states and >= 2 actions");
  detail::require(k_min >= 1 && k_min <= k_max && k_max < actions,
                  "standard_instance: need 1 <= k_min <= k_max < actions");
  Rng rng = make_rng(seed, 0, 0x1d5ull);
  std::vector<BanditState> out;
  out.reserve(states);
  for (std::size_t s = 0; s < states; ++s) {
    const std::size_t k = k_min + static_cast<std::size_t>(rng() % (k_max - k_min + 1));
    std::vector<std::size_t> idx(actions);
    for (std::size_t a = 0; a < actions; ++a) idx[a] = a;
    for (std::size_t a = actions - 1; a > 0; --a) {
      std::swap(idx[a], idx[static_cast<std::size_t>(rng() % (a + 1))]);
    }
    std::vector<double> r(actions, 0.0);
    for (std::size_t j = 0; j < k; ++j) r[idx[j]] = 1.0;
    std::string id = std::to_string(s);
    if (id.size() < 2) id.insert(0, 2 - id.size(), '0');
    out.push_back({"s" + id, RewardVector(std::move(r))});
  }
  return BanditInstance::with_uniform_weights(std::move(out));
}

}  // namespace pmdlab
