#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "slim/analysis.hpp"
#include "slim/autodiff.hpp"
#include "slim/losses.hpp"
#include "slim/metrics.hpp"
#include "slim/model.hpp"
#include "slim/params.hpp"
#include "slim/synth.hpp"
#include "slim/trainer.hpp"

using namespace slim;

namespace {

Tensor gaussian(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Tensor t = Tensor::zeros(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = nd(rng);
  return t;
}

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = gaussian({n, n}, 1), b = gaussian({n, n}, 2);
  for (auto _ : state) {
    ad::Graph g;
    const auto x = g.parameter(a), y = g.parameter(b);
    const auto out = ad::frobenius_sq(ad::matmul(x, y));
    g.backward(out);
    benchmark::DoNotOptimize(g.grad(x));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(32, 256)->Complexity();

void BM_Stage1Loss(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor s = gaussian({batch, 50, 256}, 3), l = gaussian({batch, 50, 256}, 4);
  for (auto _ : state) {
    ad::Graph g;
    const auto vs = g.parameter(s), vl = g.parameter(l);
    const auto loss = loss::stage1_loss(vs, vl, loss::kDefaultLambda, loss::LossMode::gram_scaled);
    g.backward(loss.total);
    benchmark::DoNotOptimize(g.grad(vs));
  }
}
BENCHMARK(BM_Stage1Loss)->Arg(4)->Arg(16);

void BM_Stage2Forward(benchmark::State& state) {
  model::ModelConfig cfg;
  const model::SlimModel m(cfg);
  model::ParamTable params;
  ad::Rng rng(0);
  m.init_stage1(params, rng);
  m.init_stage2(params, rng);
  const Tensor s = gaussian({11, cfg.style_features, 50}, 5);
  const Tensor l = gaussian({8, cfg.linguistics_features, 50}, 6);
  for (auto _ : state) {
    ad::Graph g;
    model::Bindings b(g, params, model::SlimModel::is_stage2_param);
    const auto out = m.forward_full(b, g.constant(s), g.constant(l), model::Mode::eval());
    benchmark::DoNotOptimize(out.logit.value().item());
  }
}
BENCHMARK(BM_Stage2Forward)->Unit(benchmark::kMillisecond);

void BM_Eer(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  std::vector<double> real(n), fake(n);
  for (auto& x : real) x = nd(rng) + 1.0;
  for (auto& x : fake) x = nd(rng);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::eer(real, fake).eer);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Eer)->RangeMultiplier(4)->Range(256, 65536)->Complexity(benchmark::oNLogN);

void BM_CcaFit(benchmark::State& state) {
  const auto f = static_cast<std::size_t>(state.range(0));
  const Tensor s = gaussian({200, f}, 8), l = gaussian({200, f}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(analysis::cca_fit(s, l).correlations);
}
BENCHMARK(BM_CcaFit)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_SynthSample(benchmark::State& state) {
  synth::SynthConfig cfg;
  const synth::SynthWorld world(cfg);
  std::size_t i = 0;
  for (auto _ : state) {
    std::mt19937_64 rng(world.sample_seed(store::Label::fake, i++));
    const auto [s, l] = world.generate_sample(store::Label::fake, rng);
    benchmark::DoNotOptimize(train::pool_sample("b", store::Label::fake, s, l, 50).style.size());
  }
}
BENCHMARK(BM_SynthSample)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
