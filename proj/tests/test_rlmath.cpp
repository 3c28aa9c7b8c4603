#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "stts/rlmath.hpp"

namespace stts::rl {
namespace {

std::vector<double> normal_vec(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

TEST(Reward, VerifiableRewardIsIndicator) {
  EXPECT_EQ(verifiable_reward(Preference::A, Preference::A), 1);
  EXPECT_EQ(verifiable_reward(Preference::B, Preference::A), 0);
  EXPECT_EQ(verifiable_reward(Verdict::B, Preference::B), 1);
  EXPECT_EQ(verifiable_reward(Verdict::Unparseable, Preference::A), 0);
}

TEST(PolicyRatio, ExpOfDifferenceWithCap) {
  const std::vector<double> cur{0.0, -1.0, 50.0};
  const std::vector<double> old{0.0, -2.0, 0.0};
  const auto r = policy_ratio(cur, old, 20.0);
  EXPECT_DOUBLE_EQ(r.ratios[0], 1.0);
  EXPECT_NEAR(r.ratios[1], std::exp(1.0), 1e-15);
  EXPECT_DOUBLE_EQ(r.ratios[2], std::exp(20.0));
  EXPECT_EQ(r.clamped, 1u);
}

TEST(Gae, HandComputedExample) {
  TrajectoryBatch b{{1.0, 0.5}, {0.2, 0.1, 0.0}, 0.0, {}};
  const auto a = gae_advantages(b, 0.9, 0.95);
  EXPECT_NEAR(a[0], 1.232, 1e-12);
  EXPECT_NEAR(a[1], 0.4, 1e-12);
}

TEST(Gae, LambdaZeroIsOneStepTd) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto n = 1 + rng() % 30;
    TrajectoryBatch b{normal_vec(rng, n), normal_vec(rng, n + 1), 0.0, {}};
    const auto a = gae_advantages(b, 0.9, 0.0);
    for (std::size_t t = 0; t < n; ++t) EXPECT_EQ(a[t], b.rewards[t] + 0.9 * b.values[t + 1] - b.values[t]);
  }
}

TEST(Gae, UndiscountedWithZeroValuesIsRewardToGo) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto n = 1 + rng() % 30;
    std::vector<double> r(n);
    for (auto& x : r) x = static_cast<double>(rng() % 5);  // integers keep sums exact
    TrajectoryBatch b{r, std::vector<double>(n + 1, 0.0), 0.0, {}};
    const auto a = gae_advantages(b, 1.0, 1.0);
    for (std::size_t t = 0; t < n; ++t) EXPECT_EQ(a[t], std::accumulate(r.begin() + static_cast<long>(t), r.end(), 0.0));
  }
}

TEST(Gae, MaskedPaddingChangesNothing) {
  TrajectoryBatch plain{{1.0, 0.5}, {0.2, 0.1, 0.0}, 0.0, {}};
  TrajectoryBatch padded{{1.0, 99.0, 0.5}, {0.2, 42.0, 0.1, 0.0}, 0.0, {1, 0, 1}};
  const auto a = gae_advantages(plain, 0.9, 0.95);
  const auto b = gae_advantages(padded, 0.9, 0.95);
  EXPECT_EQ(b[0], a[0]);
  EXPECT_EQ(b[1], 0.0);
  EXPECT_EQ(b[2], a[1]);
}

TEST(Gae, ShapeValidation) {
  TrajectoryBatch b{{1.0}, {0.0}, 0.0, {}};
  EXPECT_THROW(gae_advantages(b, 0.9, 0.9), InvariantError);
}

TEST(TokenKl, Estimators) {
  const std::vector<double> cur{-1.0, -0.5};
  const std::vector<double> ref{-1.5, -0.5};
  const auto k1 = token_kl(cur, ref);
  EXPECT_EQ(k1[0], 0.5);
  EXPECT_EQ(k1[1], 0.0);
  const auto k3 = token_kl(cur, ref, KlEstimator::Unbiased);
  EXPECT_NEAR(k3[0], std::exp(-0.5) + 0.5 - 1.0, 1e-15);
  EXPECT_EQ(k3[1], 0.0);
}

TEST(TokenKl, UnbiasedEstimatorIsNonNegative) {
  std::mt19937_64 rng(3);
  const auto a = normal_vec(rng, 1000, 3.0);
  const auto b = normal_vec(rng, 1000, 3.0);
  for (double k : token_kl(a, b, KlEstimator::Unbiased)) EXPECT_GE(k, 0.0);
}

TEST(ReinforcePP, SuffixSumOfKl) {
  const std::vector<double> kl{0.1, 0.2, 0.3};
  const auto a = reinforcepp_advantages(1.0, kl, 0.5);
  EXPECT_NEAR(a[0], 1.0 - 0.5 * 0.6, 1e-15);
  EXPECT_NEAR(a[1], 1.0 - 0.5 * 0.5, 1e-15);
  EXPECT_NEAR(a[2], 1.0 - 0.5 * 0.3, 1e-15);
  const auto zero_beta = reinforcepp_advantages(1.0, kl, 0.0);
  for (double x : zero_beta) EXPECT_EQ(x, 1.0);
}

TEST(BatchNormalize, HandExample) {
  const auto z = batch_normalize(std::vector<double>{2.0, 0.0, -2.0});
  EXPECT_NEAR(z[0], 1.2247448713915890491, 1e-15);
  EXPECT_EQ(z[1], 0.0);
  EXPECT_NEAR(z[2], -1.2247448713915890491, 1e-15);
}

TEST(BatchNormalize, ZeroMeanUnitStdProperty) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const auto n = 2 + rng() % 100;
    const double scale = std::pow(10.0, static_cast<double>(rng() % 7) - 3.0);
    auto xs = normal_vec(rng, n, scale);
    for (auto& x : xs) x += static_cast<double>(rng() % 100) - 50.0;
    std::vector<double> z;
    try {
      z = batch_normalize(xs);
    } catch (const DegenerateBatchError&) {
      continue;
    }
    double mu = 0;
    for (double v : z) mu += v;
    mu /= static_cast<double>(n);
    double var = 0;
    for (double v : z) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    EXPECT_NEAR(mu, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-9);
  }
}

TEST(BatchNormalize, DegenerateInputsThrow) {
  EXPECT_THROW(batch_normalize(std::vector<double>{3.0}), DegenerateBatchError);
  EXPECT_THROW(batch_normalize(std::vector<double>{1.0, 1.0, 1.0}), DegenerateBatchError);
  const std::vector<std::uint8_t> mask{1, 0, 0};
  EXPECT_THROW(batch_normalize(std::vector<double>{1.0, 2.0, 3.0}, mask), DegenerateBatchError);
}

TEST(Grpo, FiveOfEightCorrect) {
  const auto g = grpo_advantages({{1, 1, 1, 1, 1, 0, 0, 0}});
  EXPECT_NEAR(g.advantages[0][0], 0.77459666924148337704, 1e-12);
  EXPECT_NEAR(g.advantages[0][7], -1.2909944487358056284, 1e-12);
  EXPECT_TRUE(g.degenerate_groups.empty());
}

TEST(Grpo, AllEqualGroupIsZeroedAndFlagged) {
  const auto g = grpo_advantages({{1, 1, 1}, {0, 1}});
  EXPECT_EQ(g.advantages[0], std::vector<double>(3, 0.0));
  EXPECT_EQ(g.degenerate_groups, std::vector<std::size_t>{0});
  EXPECT_THROW(grpo_advantages({{1}}), std::invalid_argument);
}

TEST(Broadcast, MaskedSlotsAreZero) {
  const std::vector<std::uint8_t> mask{1, 0, 1};
  EXPECT_EQ(broadcast_to_tokens(0.5, 3, mask), (std::vector<double>{0.5, 0.0, 0.5}));
}

TEST(DualClip, HandTable) {
  const RlConfig cfg;
  EXPECT_DOUBLE_EQ(dual_clip_loss(std::vector<double>{1.0}, std::vector<double>{1.0}, cfg), -1.0);
  EXPECT_DOUBLE_EQ(dual_clip_loss(std::vector<double>{5.0}, std::vector<double>{-2.0}, cfg), 6.0);
  EXPECT_DOUBLE_EQ(dual_clip_loss(std::vector<double>{2.0}, std::vector<double>{2.0}, cfg), -2.4);
  EXPECT_DOUBLE_EQ(dual_clip_surrogate(0.5, -1.0, cfg), -0.8);
}

TEST(DualClip, StrictModeAppliesOuterBoundForPositiveAdvantage) {
  RlConfig cfg;
  cfg.strict_literal = true;
  EXPECT_DOUBLE_EQ(dual_clip_loss(std::vector<double>{2.0}, std::vector<double>{2.0}, cfg), -6.0);
  EXPECT_DOUBLE_EQ(dual_clip_loss(std::vector<double>{5.0}, std::vector<double>{-2.0}, cfg), 6.0);
}

TEST(DualClip, NegativeAdvantageIsBoundedByC) {
  const RlConfig cfg;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ratio(0.0, 50.0);
  std::uniform_real_distribution<double> adv(-10.0, 0.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = adv(rng);
    EXPECT_GE(dual_clip_surrogate(ratio(rng), a, cfg), cfg.dual_clip_c * a - 1e-12);
  }
}

TEST(DualClip, InfiniteBoundsReduceToVanillaObjective) {
  RlConfig cfg;
  cfg.eps_low = cfg.eps_high = cfg.dual_clip_c = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    const double r = std::exp(normal_vec(rng, 1)[0]);
    const double a = normal_vec(rng, 1)[0];
    EXPECT_NEAR(dual_clip_surrogate(r, a, cfg), r * a, 1e-12);
  }
}

TEST(DualClip, ConfigValidation) {
  RlConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.dual_clip_c = 1.1;
  EXPECT_THROW(cfg.validate(), InvariantError);
  cfg = {};
  cfg.gae_lambda = 1.5;
  EXPECT_THROW(cfg.validate(), InvariantError);
}

TEST(GrpoLoss, BetaZeroEqualsDualClip) {
  RlConfig cfg;
  cfg.kl_beta = 0.0;
  std::mt19937_64 rng(7);
  const auto lr = normal_vec(rng, 32, 0.3);
  std::vector<double> ratios;
  for (double x : lr) ratios.push_back(std::exp(x));
  const auto adv = normal_vec(rng, 32);
  const auto kl = normal_vec(rng, 32);
  EXPECT_NEAR(grpo_loss(ratios, adv, kl, cfg), dual_clip_loss(ratios, adv, cfg), 1e-12);
}

TEST(Masks, PaddingNeverChangesLoss) {
  const RlConfig cfg;
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto n = 1 + rng() % 40;
    TokenLogProbs lp{normal_vec(rng, n, 0.3), normal_vec(rng, n, 0.3), normal_vec(rng, n, 0.3), {}};
    const auto adv = normal_vec(rng, n);
    const auto base = loss_and_grad(LossKind::Grpo, lp, adv, cfg);

    auto padded = lp;
    auto padded_adv = adv;
    const auto at = static_cast<long>(rng() % (n + 1));
    padded.current.insert(padded.current.begin() + at, 7.0);
    padded.old.insert(padded.old.begin() + at, -7.0);
    padded.reference.insert(padded.reference.begin() + at, 3.0);
    padded_adv.insert(padded_adv.begin() + at, 100.0);
    padded.mask.assign(n + 1, 1);
    padded.mask[static_cast<std::size_t>(at)] = 0;
    const auto withpad = loss_and_grad(LossKind::Grpo, padded, padded_adv, cfg);
    EXPECT_EQ(withpad.loss, base.loss);
    EXPECT_EQ(withpad.grad[static_cast<std::size_t>(at)], 0.0);
  }
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (auto kind : {LossKind::DualClip, LossKind::Grpo}) {
    for (auto est : {KlEstimator::LogRatio, KlEstimator::Unbiased}) {
      RlConfig cfg;
      cfg.kl_estimator = est;
      for (int seed = 0; seed < 10; ++seed) {
        TokenLogProbs lp{normal_vec(rng, 32, 0.3), normal_vec(rng, 32, 0.3), normal_vec(rng, 32, 0.3), {}};
        const auto adv = normal_vec(rng, 32);
        EXPECT_LT(grad_check(kind, lp, adv, cfg).max_rel_error, 1e-5);
      }
    }
  }
}

TEST(Gradient, NonFiniteInputIsRejected) {
  TokenLogProbs lp{{std::nan("")}, {0.0}, {0.0}, {}};
  EXPECT_THROW(grad_check(LossKind::DualClip, lp, std::vector<double>{1.0}, RlConfig{}), GradCheckError);
}

}  // namespace
}  // namespace stts::rl
