#include <benchmark/benchmark.h>

#include "idiolens/attnstats.hpp"
#include "synthetic.hpp"

using namespace idiolens;

namespace {

struct Set {
  std::vector<PieSentence> sentences;
  std::vector<ActivationDump> dumps;
};

Set make_set(int n, int max_subtokens) {
  std::mt19937_64 rng(1);
  testkit::DumpShape shape;
  shape.max_subtokens = max_subtokens;
  Set s;
  for (int i = 0; i < n; ++i) {
    s.sentences.push_back(testkit::random_sentence(rng, "s" + std::to_string(i), max_subtokens / 2 + 2, "i"));
    s.dumps.push_back(testkit::random_dump(rng, s.sentences.back(), shape));
  }
  return s;
}

void BM_EncoderProfiles(benchmark::State& state) {
  const Set s = make_set(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const DumpIndex idx = index_dumps(s.dumps);
  for (auto _ : state) {
    auto p = encoder_profiles(idx, s.sentences, Analysis::pie2ctx, Category::fig);
    benchmark::DoNotOptimize(p);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncoderProfiles)->Args({200, 12})->Args({200, 48})->Args({1000, 24});

void BM_CrossProfile(benchmark::State& state) {
  const Set s = make_set(200, 24);
  std::vector<AlignmentPairs> pairs;
  for (const auto& p : s.sentences) {
    AlignmentPairs a;
    for (int w = 0; w < static_cast<int>(p.tokens.size()); ++w) a.emplace_back(w, w % 4);
    pairs.push_back(a);
  }
  for (auto _ : state)
    for (std::size_t i = 0; i < s.dumps.size(); ++i)
      for (int l = 0; l < s.dumps[i].layers(); ++l) benchmark::DoNotOptimize(cross_profile(s.dumps[i], pairs[i], s.sentences[i], l));
  state.SetItemsProcessed(state.iterations() * 200);
}
BENCHMARK(BM_CrossProfile);

}  // namespace
