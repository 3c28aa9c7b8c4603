#include "stts/rlmath.hpp"

#include <algorithm>
#include <cmath>

namespace stts::rl {

namespace {

bool valid(Mask mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

void check_mask(Mask mask, std::size_t n, const char* what) {
  if (!mask.empty() && mask.size() != n) throw std::invalid_argument(std::string(what) + ": mask length mismatch");
}

void check_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": input length mismatch");
}

std::size_t valid_count(Mask mask, std::size_t n) {
  if (mask.empty()) return n;
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

}  // namespace

void RlConfig::validate() const {
  if (!(eps_low >= 0) || !(eps_high >= 0)) throw InvariantError("clip epsilons must be >= 0");
  if (!(dual_clip_c > 1.0 + eps_high)) throw InvariantError("dual_clip_c must exceed 1 + eps_high");
  if (!(kl_beta >= 0)) throw InvariantError("kl_beta must be >= 0");
  if (!(gae_gamma >= 0 && gae_gamma <= 1)) throw InvariantError("gae_gamma must lie in [0, 1]");
  if (!(gae_lambda >= 0 && gae_lambda <= 1)) throw InvariantError("gae_lambda must lie in [0, 1]");
  if (!(log_ratio_cap > 0)) throw InvariantError("log_ratio_cap must be > 0");
}

void TokenLogProbs::validate() const {
  if (old.size() != current.size() || reference.size() != current.size() ||
      (!mask.empty() && mask.size() != current.size())) {
    throw InvariantError("token log-prob columns must have equal lengths");
  }
}

void TrajectoryBatch::validate() const {
  if (values.size() != rewards.size() + 1) throw InvariantError("values must have one more entry than rewards");
  if (!mask.empty() && mask.size() != rewards.size()) throw InvariantError("mask must match rewards in length");
}

int verifiable_reward(Preference predicted, Preference truth) { return predicted == truth ? 1 : 0; }

int verifiable_reward(Verdict predicted, Preference truth) {
  const auto label = verdict_to_label(predicted);
  return label && *label == to_int(truth) ? 1 : 0;
}

RatioResult policy_ratio(std::span<const double> current, std::span<const double> old, double cap, Mask mask) {
  check_same_size(current.size(), old.size(), "policy_ratio");
  check_mask(mask, current.size(), "policy_ratio");
  RatioResult out;
  out.ratios.assign(current.size(), 0.0);
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (!valid(mask, i)) continue;
    double d = current[i] - old[i];
    if (d > cap || d < -cap) {
      d = std::clamp(d, -cap, cap);
      ++out.clamped;
    }
    out.ratios[i] = std::exp(d);
  }
  return out;
}

std::vector<double> gae_advantages(const TrajectoryBatch& batch, double gamma, double lambda) {
  batch.validate();
  const auto n = batch.rewards.size();
  std::vector<double> adv(n, 0.0);
  double next_value = batch.values.back();
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    if (!valid(batch.mask, t)) continue;
    const double delta = batch.rewards[t] + gamma * next_value - batch.values[t];
    running = delta + gamma * lambda * running;
    adv[t] = running;
    next_value = batch.values[t];
  }
  return adv;
}

std::vector<double> token_kl(std::span<const double> current, std::span<const double> reference,
                             KlEstimator estimator, Mask mask) {
  check_same_size(current.size(), reference.size(), "token_kl");
  check_mask(mask, current.size(), "token_kl");
  std::vector<double> kl(current.size(), 0.0);
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (!valid(mask, i)) continue;
    const double log_ratio = current[i] - reference[i];
    kl[i] = estimator == KlEstimator::LogRatio ? log_ratio : std::exp(-log_ratio) + log_ratio - 1.0;
  }
  return kl;
}

std::vector<double> reinforcepp_advantages(double outcome_reward, std::span<const double> kl_tokens, double beta,
                                           Mask mask) {
  check_mask(mask, kl_tokens.size(), "reinforcepp_advantages");
  std::vector<double> adv(kl_tokens.size(), 0.0);
  double suffix = 0.0;
  for (std::size_t t = kl_tokens.size(); t-- > 0;) {
    if (!valid(mask, t)) continue;
    suffix += kl_tokens[t];
    adv[t] = outcome_reward - beta * suffix;
  }
  return adv;
}

std::vector<double> batch_normalize(std::span<const double> advantages, Mask mask) {
  check_mask(mask, advantages.size(), "batch_normalize");
  const auto n = valid_count(mask, advantages.size());
  if (n < 2) throw DegenerateBatchError("batch_normalize needs at least two valid entries");
  double sum = 0.0;
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    if (valid(mask, i)) sum += advantages[i];
  }
  const double mu = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    if (valid(mask, i)) ss += (advantages[i] - mu) * (advantages[i] - mu);
  }
  const double sigma = std::sqrt(ss / static_cast<double>(n));
  if (!(sigma >= kDegenerateStdTolerance)) {
    throw DegenerateBatchError("batch_normalize: standard deviation below tolerance (degenerate batch)");
  }
  std::vector<double> out(advantages.size(), 0.0);
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    if (valid(mask, i)) out[i] = (advantages[i] - mu) / sigma;
  }
  return out;
}

GroupAdvantages grpo_advantages(const std::vector<std::vector<double>>& group_rewards) {
  GroupAdvantages out;
  out.advantages.reserve(group_rewards.size());
  for (std::size_t g = 0; g < group_rewards.size(); ++g) {
    const auto& rewards = group_rewards[g];
    if (rewards.size() < 2) throw std::invalid_argument("grpo_advantages: every group needs at least two rollouts");
    try {
      out.advantages.push_back(batch_normalize(rewards));
    } catch (const DegenerateBatchError&) {
      out.advantages.emplace_back(rewards.size(), 0.0);
      out.degenerate_groups.push_back(g);
    }
  }
  return out;
}

std::vector<double> broadcast_to_tokens(double advantage, std::size_t length, Mask mask) {
  check_mask(mask, length, "broadcast_to_tokens");
  std::vector<double> out(length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    if (valid(mask, i)) out[i] = advantage;
  }
  return out;
}

double dual_clip_surrogate(double ratio, double advantage, const RlConfig& cfg) {
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high) * advantage;
  double s = std::min(unclipped, clipped);
  if (cfg.strict_literal || advantage < 0) s = std::max(s, cfg.dual_clip_c * advantage);
  return s;
}

double dual_clip_loss(std::span<const double> ratios, std::span<const double> advantages, const RlConfig& cfg,
                      Mask mask) {
  check_same_size(ratios.size(), advantages.size(), "dual_clip_loss");
  check_mask(mask, ratios.size(), "dual_clip_loss");
  const auto n = valid_count(mask, ratios.size());
  if (n == 0) throw std::invalid_argument("dual_clip_loss: no valid tokens");
  double sum = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (valid(mask, i)) sum += dual_clip_surrogate(ratios[i], advantages[i], cfg);
  }
  return -sum / static_cast<double>(n);
}

double grpo_loss(std::span<const double> ratios, std::span<const double> advantages,
                 std::span<const double> kl_tokens, const RlConfig& cfg, Mask mask) {
  check_same_size(ratios.size(), advantages.size(), "grpo_loss");
  check_same_size(ratios.size(), kl_tokens.size(), "grpo_loss");
  check_mask(mask, ratios.size(), "grpo_loss");
  const auto n = valid_count(mask, ratios.size());
  if (n == 0) throw std::invalid_argument("grpo_loss: no valid tokens");
  double sum = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (valid(mask, i)) sum += dual_clip_surrogate(ratios[i], advantages[i], cfg) - cfg.kl_beta * kl_tokens[i];
  }
  return -sum / static_cast<double>(n);
}

namespace {

// d surrogate / d ratio, following the same branch the value takes.
double surrogate_slope(double ratio, double advantage, const RlConfig& cfg) {
  const double lo = 1.0 - cfg.eps_low;
  const double hi = 1.0 + cfg.eps_high;
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, lo, hi) * advantage;
  const double clipped_slope = (ratio > lo && ratio < hi) ? advantage : 0.0;
  double s = std::min(unclipped, clipped);
  double slope = unclipped < clipped ? advantage : (clipped < unclipped ? clipped_slope : advantage);
  if (cfg.strict_literal || advantage < 0) {
    if (cfg.dual_clip_c * advantage > s) slope = 0.0;
  }
  return slope;
}

double loss_value(LossKind kind, const TokenLogProbs& lp, std::span<const double> advantages, const RlConfig& cfg) {
  const auto ratios = policy_ratio(lp.current, lp.old, cfg.log_ratio_cap, lp.mask).ratios;
  if (kind == LossKind::DualClip) return dual_clip_loss(ratios, advantages, cfg, lp.mask);
  const auto kl = token_kl(lp.current, lp.reference, cfg.kl_estimator, lp.mask);
  return grpo_loss(ratios, advantages, kl, cfg, lp.mask);
}

std::vector<double> kinks(double advantage, const RlConfig& cfg) {
  std::vector<double> out{cfg.log_ratio_cap, -cfg.log_ratio_cap, std::log1p(cfg.eps_high)};
  if (cfg.eps_low < 1.0) out.push_back(std::log1p(-cfg.eps_low));
  if (cfg.strict_literal || advantage < 0) out.push_back(std::log(cfg.dual_clip_c));
  return out;
}

}  // namespace

LossAndGrad loss_and_grad(LossKind kind, const TokenLogProbs& lp, std::span<const double> advantages,
                          const RlConfig& cfg) {
  lp.validate();
  check_same_size(lp.size(), advantages.size(), "loss_and_grad");
  LossAndGrad out;
  out.loss = loss_value(kind, lp, advantages, cfg);
  out.grad.assign(lp.size(), 0.0);
  const auto n = static_cast<double>(valid_count(lp.mask, lp.size()));
  for (std::size_t i = 0; i < lp.size(); ++i) {
    if (!valid(lp.mask, i)) continue;
    const double d = lp.current[i] - lp.old[i];
    double ds = 0.0;
    if (d > -cfg.log_ratio_cap && d < cfg.log_ratio_cap) {
      const double ratio = std::exp(d);
      ds = surrogate_slope(ratio, advantages[i], cfg) * ratio;
    }
    double dkl = 0.0;
    if (kind == LossKind::Grpo) {
      dkl = cfg.kl_estimator == KlEstimator::LogRatio ? 1.0 : 1.0 - std::exp(lp.reference[i] - lp.current[i]);
    }
    out.grad[i] = -(ds - cfg.kl_beta * dkl) / n;
  }
  return out;
}

GradCheckResult grad_check(LossKind kind, TokenLogProbs inputs, std::span<const double> advantages,
                           const RlConfig& cfg, double h) {
  inputs.validate();
  check_same_size(inputs.size(), advantages.size(), "grad_check");
  if (!(h > 0)) throw std::invalid_argument("grad_check: step must be > 0");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!std::isfinite(inputs.current[i]) || !std::isfinite(inputs.old[i]) || !std::isfinite(inputs.reference[i]) ||
        !std::isfinite(advantages[i])) {
      throw GradCheckError("grad_check: non-finite input at token " + std::to_string(i));
    }
  }

  GradCheckResult result;
  const double margin = 4.0 * h;
  for (;; ++result.perturbation_rounds) {
    bool near = false;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!valid(inputs.mask, i)) continue;
      const double d = inputs.current[i] - inputs.old[i];
      for (double k : kinks(advantages[i], cfg)) {
        if (std::abs(d - k) < margin) {
          near = true;
          inputs.current[i] += 10.0 * h * static_cast<double>(result.perturbation_rounds + 1);
          break;
        }
      }
    }
    if (!near) break;
    if (result.perturbation_rounds == 3) {
      throw GradCheckError("grad_check: inputs remain on a clip boundary after 3 perturbations");
    }
  }

  const auto analytic = loss_and_grad(kind, inputs, advantages, cfg).grad;
  auto probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    probe.current[i] = inputs.current[i] + h;
    const double up = loss_value(kind, probe, advantages, cfg);
    probe.current[i] = inputs.current[i] - h;
    const double down = loss_value(kind, probe, advantages, cfg);
    probe.current[i] = inputs.current[i];
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), kGradRelativeFloor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic[i] - numeric) / scale);
  }
  return result;
}

}  // namespace stts::rl
