#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "debias/ensemble.hpp"
#include "debias/metrics.hpp"

using namespace debias;

namespace {

TokenSequence random_tokens(std::size_t n, std::size_t alphabet, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TokenSequence t;
  t.granularity = Granularity::Whitespace;
  for (std::size_t i = 0; i < n; ++i) t.tokens.push_back(std::string(1, static_cast<char>('a' + rng() % alphabet)));
  return t;
}

void BM_Lcs(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_tokens(n, 20, 1), y = random_tokens(n, 20, 2);
  for (auto _ : state) benchmark::DoNotOptimize(lcs_length(x, y));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Lcs)->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oNSquared);

void BM_Bleu(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_tokens(n, 20, 3), y = random_tokens(n, 20, 4);
  for (auto _ : state) benchmark::DoNotOptimize(bleu(x, y));
}
BENCHMARK(BM_Bleu)->RangeMultiplier(4)->Range(16, 1024);

void BM_Meteor(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_tokens(n, 30, 5), y = random_tokens(n, 30, 6);
  for (auto _ : state) benchmark::DoNotOptimize(meteor(x, y));
}
BENCHMARK(BM_Meteor)->RangeMultiplier(2)->Range(8, 128);

void BM_ChineseSentenceMetrics(benchmark::State& state) {
  const auto c = tokenize("这位女士做事总是很情绪化，不适合担任领导。");
  const auto r = tokenize("这位同事做事有时比较情绪化，需要进一步沟通。");
  for (auto _ : state) {
    benchmark::DoNotOptimize(bleu(c, r));
    benchmark::DoNotOptimize(meteor(c, r));
    benchmark::DoNotOptimize(rouge_l(c, r));
  }
}
BENCHMARK(BM_ChineseSentenceMetrics);

void BM_VoteBinary(benchmark::State& state) {
  const VotingPolicy policy;
  std::vector<BinaryVote> votes{{1, true, {}}, {2, false, {}}, {3, true, {}},
                                {4, std::nullopt, {}}, {5, false, {}}, {6, true, {}}};
  for (auto _ : state) benchmark::DoNotOptimize(vote_binary(votes, policy));
}
BENCHMARK(BM_VoteBinary);

void BM_VoteMultilabel(benchmark::State& state) {
  const VotingPolicy policy;
  std::vector<MultiLabelVote> votes;
  for (int e = 1; e <= 6; ++e) votes.push_back({e, BiasVector::from_mask(static_cast<unsigned>(e) % 8), {}});
  for (auto _ : state) benchmark::DoNotOptimize(vote_multilabel(votes, policy));
}
BENCHMARK(BM_VoteMultilabel);

}  // namespace
BENCHMARK_MAIN();
