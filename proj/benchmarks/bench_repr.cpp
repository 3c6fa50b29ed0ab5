#include <benchmark/benchmark.h>

#include "idiolens/repr.hpp"
#include "synthetic.hpp"

using namespace idiolens;

namespace {

void BM_FitCca(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto d = state.range(0), n = state.range(1);
  const Eigen::MatrixXd a = testkit::gaussian(rng, d, n);
  const Eigen::MatrixXd b = testkit::gaussian(rng, d, d) * a + testkit::gaussian(rng, d, n);
  for (auto _ : state) benchmark::DoNotOptimize(fit_cca(a, b));
}
BENCHMARK(BM_FitCca)->Args({64, 5000})->Args({512, 5000})->Unit(benchmark::kMillisecond);

void BM_CcaSimilarity(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd a = testkit::gaussian(rng, 512, 5000);
  const Eigen::MatrixXd b = testkit::gaussian(rng, 512, 5000);
  const CcaProjection p = fit_cca(a, b);
  for (auto _ : state) benchmark::DoNotOptimize(cca_similarity(p, a, b));
}
BENCHMARK(BM_CcaSimilarity)->Unit(benchmark::kMillisecond);

}  // namespace
