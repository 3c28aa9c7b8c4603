#include <string>

#include <benchmark/benchmark.h>

#include "stts/trace.hpp"

namespace {

// A synthetic trajectory with `rounds` reflective think segments and a final verdict.
std::string trajectory(int rounds) {
  std::string s = "<think>";
  for (int i = 0; i < rounds; ++i) {
    s += "Response A cites the source, but let me check the date again. Wait, the second claim is "
         "unsupported. Alternatively, B may be right. Hmm, double-check the arithmetic before deciding. ";
  }
  return s + "</think>Overall A is better. [[A]]";
}

void BM_SegmentTrace(benchmark::State& state) {
  const auto raw = trajectory(static_cast<int>(state.range(0)));
  const stts::MarkerConfig markers;
  for (auto _ : state) benchmark::DoNotOptimize(stts::segment_trace(raw, markers));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(raw.size()));
}
BENCHMARK(BM_SegmentTrace)->Range(1, 256);

void BM_CountReflective(benchmark::State& state) {
  const auto raw = trajectory(static_cast<int>(state.range(0)));
  const auto lexicon = stts::ReflectiveLexicon::standard();
  for (auto _ : state) benchmark::DoNotOptimize(stts::count_reflective(raw, lexicon));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(raw.size()));
}
BENCHMARK(BM_CountReflective)->Range(1, 256);

}  // namespace

BENCHMARK_MAIN();
