#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "stts/rlmath.hpp"

namespace {

using namespace stts::rl;

std::vector<double> normal(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

TokenLogProbs log_probs(std::size_t n) {
  TokenLogProbs lp;
  lp.old = normal(n, 1);
  lp.current = lp.old;
  const auto noise = normal(n, 2, 0.2);
  for (std::size_t i = 0; i < n; ++i) lp.current[i] += noise[i];
  lp.reference = normal(n, 3);
  return lp;
}

void BM_Gae(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  TrajectoryBatch b;
  b.rewards = normal(n, 4);
  b.values = normal(n + 1, 5);
  for (auto _ : state) benchmark::DoNotOptimize(gae_advantages(b, 0.9, 0.99));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Gae)->Range(256, 1 << 16);

void BM_BatchNormalize(benchmark::State& state) {
  const auto a = normal(static_cast<std::size_t>(state.range(0)), 6);
  for (auto _ : state) benchmark::DoNotOptimize(batch_normalize(a));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BatchNormalize)->Range(256, 1 << 16);

void BM_DualClipLoss(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto lp = log_probs(n);
  const auto ratios = policy_ratio(lp.current, lp.old).ratios;
  const auto adv = normal(n, 7);
  const RlConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(dual_clip_loss(ratios, adv, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DualClipLoss)->Range(256, 1 << 16);

void BM_LossAndGrad(benchmark::State& state) {
  const auto kind = static_cast<LossKind>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto lp = log_probs(n);
  const auto adv = normal(n, 8);
  const RlConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(kind, lp, adv, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGrad)->ArgsProduct({{1024, 1 << 14}, {0, 1}});

}  // namespace

BENCHMARK_MAIN();
