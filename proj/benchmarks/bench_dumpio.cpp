#include <benchmark/benchmark.h>

#include <sstream>

#include "idiolens/dumpio.hpp"
#include "synthetic.hpp"

using namespace idiolens;

namespace {

std::string encoded(int n, int hidden) {
  std::mt19937_64 rng(5);
  testkit::DumpShape shape;
  shape.hidden = hidden;
  shape.max_subtokens = 32;
  std::ostringstream out;
  for (int i = 0; i < n; ++i)
    write_record(out, to_record(testkit::random_dump(rng, testkit::random_sentence(rng, "s" + std::to_string(i), 20, "i"), shape)));
  return out.str();
}

void BM_ReadDumps(benchmark::State& state) {
  const std::string bytes = encoded(50, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    std::istringstream in(bytes);
    while (auto r = read_record(in)) benchmark::DoNotOptimize(dump_from_record(*r));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_ReadDumps)->Arg(0)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
