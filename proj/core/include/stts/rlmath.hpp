#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stts/model.hpp"

/// Numeric kernels for the verifiable-reward policy-gradient objectives:
/// dual-clip PPO, Reinforce++ and GRPO, with GAE and an analytic gradient
/// of every loss with respect to the current policy's log-probabilities.
///
/// Masks: every kernel takes an optional per-token mask (empty span means all
/// tokens valid). Masked tokens are skipped entirely, so inserting masked
/// padding never changes any output, and masked output slots are 0.
namespace stts::rl {

using Mask = std::span<const std::uint8_t>;

enum class KlEstimator : std::uint8_t {
  LogRatio,  // k1: log pi - log pi_ref
  Unbiased,  // k3: exp(ref - cur) - (ref - cur) - 1, always >= 0
};

struct RlConfig {
  double eps_low = 0.2;
  double eps_high = 0.2;
  double dual_clip_c = 3.0;
  double kl_beta = 0.001;
  // The reference hyperparameter list names lambda the discount (0.99) and
  // gamma the balance factor (0.9) while the GAE recursion uses gamma as the
  // discount. Defaults follow the symbols as they appear in the recursion;
  // swap them for the name-based reading.
  double gae_gamma = 0.9;
  double gae_lambda = 0.99;
  double log_ratio_cap = 20.0;
  KlEstimator kl_estimator = KlEstimator::LogRatio;
  // Apply the outer max(., c*A) for every sign of A, exactly as the objective
  // is typeset. The default applies it only for negative advantages.
  bool strict_literal = false;

  /// Throws InvariantError unless c > 1 + eps_high, eps >= 0, beta >= 0,
  /// gamma and lambda in [0, 1] and the log-ratio cap is positive.
  void validate() const;
};

struct TokenLogProbs {
  std::vector<double> current;    // log pi_theta
  std::vector<double> old;        // log pi_theta_old
  std::vector<double> reference;  // log pi_ref
  std::vector<std::uint8_t> mask;  // empty = all valid

  /// Throws InvariantError on unequal lengths.
  void validate() const;
  std::size_t size() const { return current.size(); }
};

struct TrajectoryBatch {
  std::vector<double> rewards;
  std::vector<double> values;  // rewards.size() + 1 entries; the last is the bootstrap value
  double outcome_reward = 0.0;
  std::vector<std::uint8_t> mask;  // over rewards; empty = all valid

  void validate() const;
};

class DegenerateBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 1 when the predicted preference equals the truth, else 0.
int verifiable_reward(Preference predicted, Preference truth);
/// Unparseable predictions earn 0.
int verifiable_reward(Verdict predicted, Preference truth);

struct RatioResult {
  std::vector<double> ratios;
  std::size_t clamped = 0;  // tokens whose log-ratio exceeded the cap
};

/// exp(current - old), with the log-difference clamped to [-cap, cap].
RatioResult policy_ratio(std::span<const double> current, std::span<const double> old, double cap = 20.0,
                         Mask mask = {});

/// Backward recursion A_t = delta_t + gamma * lambda * A_{t+1}, where
/// delta_t = r_t + gamma * V_{t+1} - V_t. Masked steps are removed before
/// the recursion, so the next valid step's value follows the last valid one.
std::vector<double> gae_advantages(const TrajectoryBatch& batch, double gamma, double lambda);

std::vector<double> token_kl(std::span<const double> current, std::span<const double> reference,
                             KlEstimator estimator = KlEstimator::LogRatio, Mask mask = {});

/// A_t = r(x, y) - beta * sum_{i >= t} KL_i over valid tokens.
std::vector<double> reinforcepp_advantages(double outcome_reward, std::span<const double> kl_tokens, double beta,
                                           Mask mask = {});

inline constexpr double kDegenerateStdTolerance = 1e-8;

/// (A - mean) / population std over valid entries. Throws
/// DegenerateBatchError with fewer than two valid entries or std below
/// kDegenerateStdTolerance.
std::vector<double> batch_normalize(std::span<const double> advantages, Mask mask = {});

struct GroupAdvantages {
  std::vector<std::vector<double>> advantages;  // one per group member
  std::vector<std::size_t> degenerate_groups;  // groups whose rewards were all equal; advantages zeroed
};

/// Within-group mean / population-std normalization of rollout rewards.
/// Throws std::invalid_argument for groups with fewer than two members.
GroupAdvantages grpo_advantages(const std::vector<std::vector<double>>& group_rewards);

/// Copies one sequence-level advantage onto every valid token.
std::vector<double> broadcast_to_tokens(double advantage, std::size_t length, Mask mask = {});

/// Per-token dual-clip surrogate.
double dual_clip_surrogate(double ratio, double advantage, const RlConfig& cfg);

/// -mean over valid tokens of dual_clip_surrogate.
double dual_clip_loss(std::span<const double> ratios, std::span<const double> advantages, const RlConfig& cfg,
                      Mask mask = {});

/// -mean over valid tokens of (surrogate - beta * KL).
double grpo_loss(std::span<const double> ratios, std::span<const double> advantages,
                 std::span<const double> kl_tokens, const RlConfig& cfg, Mask mask = {});

enum class LossKind : std::uint8_t { DualClip, Grpo };

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d current log-prob, per token
};

/// Loss computed from log-probabilities (ratios via policy_ratio, KL via
/// token_kl for Grpo) together with its analytic gradient.
LossAndGrad loss_and_grad(LossKind kind, const TokenLogProbs& lp, std::span<const double> advantages,
                          const RlConfig& cfg);

class GradCheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t perturbation_rounds = 0;  // retries needed to move inputs off kinks
};

/// Relative error floor: |a - n| / max(|a|, |n|, kGradRelativeFloor).
inline constexpr double kGradRelativeFloor = 1e-3;

/// Compares the analytic gradient with central finite differences of step h.
/// Tokens whose log-ratio lies within 4h of a kink (clip edges, the dual-clip
/// bound, the log-ratio cap) are nudged and the check retried, at most three
/// times, before GradCheckError is thrown.
GradCheckResult grad_check(LossKind kind, TokenLogProbs inputs, std::span<const double> advantages,
                           const RlConfig& cfg, double h = 1e-5);

}  // namespace stts::rl
