#include <benchmark/benchmark.h>

#include "idiolens/probe.hpp"
#include "synthetic.hpp"

using namespace idiolens;

namespace {

struct Linear {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Linear linear(int n, int d) {
  std::mt19937_64 rng(4);
  const Eigen::VectorXd w = testkit::gaussian(rng, d, 1);
  Linear out{testkit::gaussian(rng, n, d), {}};
  for (Eigen::Index i = 0; i < n; ++i) out.y.push_back(out.x.row(i).dot(w) + 0.5 * testkit::uniform01(rng) > 0.25);
  return out;
}

void BM_TrainProbe(benchmark::State& state) {
  const Linear data = linear(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(train_probe(data.x, data.y));
}
BENCHMARK(BM_TrainProbe)->Args({2000, 16})->Args({5000, 512})->Unit(benchmark::kMillisecond);

void BM_InlpTrain(benchmark::State& state) {
  const Linear data = linear(3000, static_cast<int>(state.range(0)));
  InlpOptions opt;
  opt.iterations = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(inlp_train(data.x, data.y, nullptr, nullptr, opt));
}
BENCHMARK(BM_InlpTrain)->Args({16, 16})->Args({128, 20})->Unit(benchmark::kMillisecond);

}  // namespace
