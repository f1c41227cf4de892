#include <benchmark/benchmark.h>

#include "dsr/feature_volume.hpp"
#include "dsr/model.hpp"
#include "dsr/sampler.hpp"
#include "dsr/synthetic.hpp"
#include "dsr/tensor.hpp"

using namespace dsr;

static void BM_Matmul(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  Rng rng(1);
  Tensor a = Tensor::randn({n, n}, rng);
  Tensor b = Tensor::randn({n, n}, rng);
  NoGradGuard ng;
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * int64_t(n) * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_TrilinearBatch(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  Rng rng(2);
  FeatureVolume vol(Tensor::randn({64, 32, 4, 4}, rng));
  std::vector<double> p(static_cast<size_t>(n) * 3);
  for (double& v : p) v = rng.uniform();
  Tensor pts = Tensor::from_data({n, 3}, std::move(p));
  NoGradGuard ng;
  for (auto _ : state) {
    Tensor s = trilinear_sample_many(vol, pts);
    benchmark::DoNotOptimize(s.data().data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_TrilinearBatch)->Arg(100)->Arg(800);

static void BM_SamplerPass(benchmark::State& state) {
  Rng rng(3);
  SamplerConfig sc;  // desk defaults: 25 queries, 4 heads, 8 points, 4 layers
  ParamStore store;
  DeformableSampler s = DeformableSampler::make(store, "s", sc, rng);
  FeatureVolume vol(Tensor::randn({sc.d, 32, 4, 4}, rng));
  Tensor question = Tensor::randn({9, sc.d}, rng);
  NoGradGuard ng;
  for (auto _ : state) {
    SampledTokenSet ts = s.sample_visual_tokens(vol, question);
    benchmark::DoNotOptimize(ts.tokens.data().data());
  }
}
BENCHMARK(BM_SamplerPass);

static void BM_QaForward(benchmark::State& state) {
  SyntheticTaskConfig tc;
  tc.n_train = 1;
  tc.n_test = 1;
  TaskDataset ds = generate_task(tc);
  QaModel m = QaModel::make(ModelConfig::desk(tc.n_archetypes));
  const TaskExample& ex = ds.train[0];
  NoGradGuard ng;
  for (auto _ : state) {
    QaOutput out = m.qa_forward(ex.video, ex.question);
    benchmark::DoNotOptimize(out.logits.data().data());
  }
}
BENCHMARK(BM_QaForward);

static void BM_QaTrainStep(benchmark::State& state) {
  SyntheticTaskConfig tc;
  tc.n_train = 1;
  tc.n_test = 1;
  TaskDataset ds = generate_task(tc);
  QaModel m = QaModel::make(ModelConfig::desk(tc.n_archetypes));
  const TaskExample& ex = ds.train[0];
  for (auto _ : state) {
    m.store.zero_grad();
    Tensor loss = cross_entropy(m.qa_forward(ex.video, ex.question).logits, ex.label);
    backward(loss);
    benchmark::DoNotOptimize(loss.value());
  }
}
BENCHMARK(BM_QaTrainStep);

BENCHMARK_MAIN();
