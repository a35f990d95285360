#include <benchmark/benchmark.h>

#include <cmath>

#include "prognosis/drc.hpp"
#include "prognosis/gbm.hpp"
#include "prognosis/gmic.hpp"
#include "prognosis/graph.hpp"
#include "prognosis/metrics.hpp"
#include "prognosis/random.hpp"

using namespace prognosis;

namespace {

Tensor random_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

GrayImage random_image(Rng& rng, std::size_t side) {
  GrayImage img(side, side);
  for (auto& v : img.pixels()) v = rng.uniform();
  return img;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor x = random_tensor(rng, {8, side, side});
  const Tensor w = random_tensor(rng, {16, 8, 3, 3});
  const Tensor b = random_tensor(rng, {16});
  for (auto _ : state) {
    Graph g;
    const NodeRef y = g.conv2d(g.input("x", x), g.parameter("w", w), g.parameter("b", b), 1, 1);
    benchmark::DoNotOptimize(g.backward(g.sum(y)));
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(16)->Arg(32)->Arg(64);

void BM_GmicForward(benchmark::State& state) {
  GmicConfig cfg;
  const NamedTensors params = init_gmic_parameters(cfg, 2);
  Rng rng(2);
  const GrayImage img = random_image(rng, cfg.input_side);
  for (auto _ : state) benchmark::DoNotOptimize(gmic_forward(img, cfg, params));
}
BENCHMARK(BM_GmicForward);

void BM_GmicLossBackward(benchmark::State& state) {
  GmicConfig cfg;
  const NamedTensors params = init_gmic_parameters(cfg, 3);
  Rng rng(3);
  const GrayImage img = random_image(rng, cfg.input_side);
  const std::vector<double> y{0, 0, 1, 1};
  for (auto _ : state) {
    GmicGraph m = build_gmic(img, cfg, params);
    const NodeRef loss = gmic_loss(m, y, 4e-5);
    benchmark::DoNotOptimize(m.graph.backward(loss));
  }
}
BENCHMARK(BM_GmicLossBackward);

void BM_GbmFit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  FeatureMatrix x(n, std::vector<double>(20));
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x[i]) v = rng.normal();
    y[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-x[i][0] - x[i][1]));
  }
  GbmParams p;
  p.num_trees = 100;
  for (auto _ : state) benchmark::DoNotOptimize(fit_gbm(x, y, p));
}
BENCHMARK(BM_GbmFit)->Arg(500)->Arg(2000);

void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.bernoulli(0.3);
    s[i] = rng.normal() + y[i];
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(s, y));
}
BENCHMARK(BM_RocAuc)->Arg(1000)->Arg(50000);

}  // namespace

BENCHMARK_MAIN();
