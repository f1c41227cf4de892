// Release gates for the sampling stack: nine checks covering gradients,
// interpolation, sampling identities, regularizer values, the dependency
// head, the memory model, the strategy sweep, the ablation sweep and a
// single-example overfit. Prints one [PASS]/[FAIL] line per gate; the exit
// code is the number of failed gates. Tolerances and sweep settings are
// pinned here on purpose.
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "dsr/experiment.hpp"
#include "dsr/grad_check.hpp"
#include "dsr/memory_model.hpp"
#include "dsr/model.hpp"
#include "dsr/optimizer.hpp"
#include "dsr/regularizers.hpp"
#include "dsr/sampler.hpp"
#include "dsr/synthetic.hpp"

#include "oracles.hpp"

using namespace dsr;

namespace {

// gate 1
constexpr double kTolInterp = 1e-4;   // paths through trilinear sampling
constexpr double kTolSmooth = 1e-6;   // interpolation-free ops
constexpr double kGradBudgetSeconds = 300.0;
// gates 7 and 8 share one sweep
constexpr int kSweepSeeds = 5;
constexpr int kSweepTrain = 96;
constexpr int kSweepTest = 48;
constexpr int kSweepEpochs = 3;
constexpr int kSweepBatch = 4;
constexpr double kSweepLr = 1e-3;
constexpr double kSoLambda = 0.01;
constexpr double kSweepBudgetSeconds = 1800.0;
// gate 9
constexpr int kOverfitMaxSteps = 500;
constexpr double kOverfitTarget = 0.01;
constexpr double kOverfitLr = 3e-3;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void expect(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

void expect_grads(const GradCheckResult& r, const std::string& what) {
  expect(r.ok, what + ": worst " + r.worst +
                   " (max rel err " + std::to_string(r.max_rel_err) + ")");
}

FeatureVolume random_volume(Shape s, Rng& rng, bool requires_grad = false) {
  return FeatureVolume(Tensor::randn(s, rng, 1.0, requires_grad));
}

Tensor interior_points(int n, Rng& rng, bool requires_grad) {
  std::vector<double> v(static_cast<size_t>(n) * 3);
  for (double& x : v) x = 0.1 + 0.8 * rng.uniform();
  return Tensor::from_data({n, 3}, std::move(v), requires_grad);
}

// ---------------------------------------------------------------- gate 1

void gate_gradient_suite(std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed : {101ull, 202ull, 303ull}) {
    Rng rng(seed);
    GradCheckOptions interp;
    interp.rel_tol = kTolInterp;
    interp.seed = seed;
    GradCheckOptions smooth;
    smooth.rel_tol = kTolSmooth;
    smooth.seed = seed;

    {
      FeatureVolume vol = random_volume({3, 4, 3, 2}, rng, true);
      Tensor pts = interior_points(6, rng, true);
      expect_grads(finite_diff_check(
                       [&]() { return sum_all(trilinear_sample_many(vol, pts)); },
                       {{"volume", vol.x}, {"points", pts}}, interp),
                   "trilinear");
    }
    {
      SamplerConfig sc;
      sc.d = 8;
      sc.n_queries = 3;
      sc.n_heads = 2;
      sc.n_points = 2;
      sc.n_layers = 2;
      sc.ffn_mult = 2;
      ParamStore store;
      Rng init(seed + 7);
      DeformableSampler s = DeformableSampler::make(store, "s", sc, init);
      FeatureVolume vol = random_volume({sc.d, 4, 3, 3}, rng, true);
      Tensor question = Tensor::randn({4, sc.d}, rng, 1.0, true);
      std::vector<std::pair<std::string, Tensor>> leaves = {
          {"queries", store.find("s.queries").value},
          {"ref.w", store.find("s.ref.w").value},
          {"off.b", store.find("s.layer0.h0.off.b").value},
          {"attn.w", store.find("s.layer1.h1.attn.w").value},
          {"val.w", store.find("s.layer1.h0.val.w").value},
          {"out.w", store.find("s.layer0.h1.out.w").value},
          {"question", question},
          {"volume", vol.x}};
      GradCheckOptions opt = interp;
      opt.max_coords = 10;
      expect_grads(finite_diff_check(
                       [&]() {
                         return sum_all(s.sample_visual_tokens(vol, question).tokens);
                       },
                       leaves, opt),
                   "sampler pass");
    }
    {
      Tensor v1 = Tensor::randn({3, 4}, rng, 0.7, true);
      Tensor v2 = Tensor::randn({3, 4}, rng, 0.7, true);
      FeatureVolume x1 = random_volume({4, 2, 2, 2}, rng, true);
      FeatureVolume x2 = random_volume({4, 2, 2, 2}, rng, true);
      expect_grads(finite_diff_check([&]() { return soft_orthogonality({v1, v2}, 0.5); },
                                     {{"v1", v1}, {"v2", v2}}, smooth),
                   "soft orthogonality");
      expect_grads(finite_diff_check([&]() { return mcr_regularizer({v1, v2}, 0.5, 0.5); },
                                     {{"v1", v1}, {"v2", v2}}, smooth),
                   "coding rate");
      expect_grads(
          finite_diff_check([&]() { return contrastive_reg({v1, v2}, {x1, x2}, 0.5, 0.1); },
                            {{"v1", v1}, {"v2", v2}, {"x1", x1.x}, {"x2", x2.x}}, smooth),
          "contrastive");
    }
    {
      ParamStore store;
      Rng init(seed + 13);
      DepConfig dc;
      dc.n_layers = 1;
      dc.n_heads = 2;
      dc.gold = false;
      DependencyEncoder enc = DependencyEncoder::make(store, "dep", 8, dc, init);
      Tensor o = Tensor::randn({5, 8}, rng, 1.0, true);
      Tensor probe = Tensor::randn({5, 5}, rng);  // fixed functional over the scores
      std::vector<std::pair<std::string, Tensor>> leaves = {
          {"o", o},
          {"u", store.find("dep.layer0.dep.u").value},
          {"wq", store.find("dep.layer0.dep.q.w").value},
          {"wk", store.find("dep.layer0.dep.k.w").value}};
      expect_grads(finite_diff_check(
                       [&]() { return sum_all(mul(enc.biaffine_scores(o), probe)); }, leaves,
                       smooth),
                   "bi-affine scores");
    }
    {
      SyntheticTaskConfig tc;
      tc.t = 8;
      tc.h = 3;
      tc.w = 3;
      tc.d = 8;
      tc.n_archetypes = 3;
      tc.events_per_video = 2;
      tc.event_duration = 2;
      tc.event_extent = 1;
      tc.n_train = 2;
      tc.n_test = 1;
      tc.seed = seed;
      TaskDataset ds = generate_task(tc);
      QaModel m = QaModel::make(ModelConfig::tiny(3));
      LabeledExample ex = ds.train_examples()[0];
      ex.video.x.set_requires_grad(true);
      std::vector<std::pair<std::string, Tensor>> leaves = {
          {"sampler.queries", m.store.find("sampler.queries").value},
          {"sampler.ref.w", m.store.find("sampler.ref.w").value},
          {"dep.v.w", m.store.find("dep.layer0.dep.v.w").value},
          {"encoder.q.w", m.store.find("encoder.layer0.attn.h0.q.w").value},
          {"head.fc2.w", m.store.find("head.fc2.w").value},
          {"volume", ex.video.x}};
      GradCheckOptions opt = interp;
      opt.max_coords = 6;
      opt.step = 1e-4;  // the answer head squashes hard; a wider stencil is stabler
      expect_grads(
          finite_diff_check(
              [&]() {
                return cross_entropy(m.qa_forward(ex.video, ex.question).logits, ex.label);
              },
              leaves, opt),
          "qa forward");
    }
  }
  double dt = seconds_since(t0);
  expect(dt < kGradBudgetSeconds,
         "gradient suite took " + std::to_string(dt) + "s, budget " +
             std::to_string(kGradBudgetSeconds));
  std::ostringstream os;
  os << "3 random points per op, " << kTolInterp << " / " << kTolSmooth << " rel tol, "
     << static_cast<int>(dt) << "s";
  detail = os.str();
}

// ---------------------------------------------------------------- gate 2

void gate_interpolation_oracle(std::string& detail) {
  Rng rng(61);
  std::vector<Shape> shapes = {{3, 4, 3, 2}, {2, 1, 5, 2}, {1, 3, 1, 4}, {4, 2, 2, 2}};
  double worst = 0.0;
  for (const Shape& vs : shapes) {
    FeatureVolume vol = random_volume(vs, rng);
    for (int i = 0; i < 1000; ++i) {
      double t = -0.2 + 1.4 * rng.uniform();
      double y = -0.2 + 1.4 * rng.uniform();
      double x = -0.2 + 1.4 * rng.uniform();
      Tensor got = trilinear_sample(vol, Tensor::from_data({3}, {t, y, x}));
      for (int c = 0; c < vs[0]; ++c) {
        double want = oracle::trilinear(vol.x.data(), vs[0], vs[1], vs[2], vs[3], c, t, y, x);
        worst = std::max(worst, std::fabs(got.at({c}) - want));
      }
    }
    expect(worst <= 1e-12, "oracle mismatch " + std::to_string(worst));

    // grid points reproduce stored values exactly
    for (int ti = 0; ti < vs[1]; ++ti)
      for (int yi = 0; yi < vs[2]; ++yi)
        for (int xi = 0; xi < vs[3]; ++xi) {
          double tc = vs[1] == 1 ? 0.0 : static_cast<double>(ti) / (vs[1] - 1);
          double yc = vs[2] == 1 ? 0.0 : static_cast<double>(yi) / (vs[2] - 1);
          double xc = vs[3] == 1 ? 0.0 : static_cast<double>(xi) / (vs[3] - 1);
          Tensor got = trilinear_sample(vol, Tensor::from_data({3}, {tc, yc, xc}));
          for (int c = 0; c < vs[0]; ++c)
            expect(got.at({c}) == vol.x.at({c, ti, yi, xi}), "grid point not exact");
        }
  }

  // linearity in the volume argument
  Shape vs = {3, 3, 4, 2};
  FeatureVolume a = random_volume(vs, rng), b = random_volume(vs, rng);
  std::vector<double> mixed(a.x.data().size());
  for (size_t i = 0; i < mixed.size(); ++i)
    mixed[i] = 0.7 * a.x.data()[i] - 1.3 * b.x.data()[i];
  FeatureVolume c(Tensor::from_data(vs, std::move(mixed)));
  for (int i = 0; i < 200; ++i) {
    Tensor p = Tensor::from_data(
        {3}, {-0.1 + 1.2 * rng.uniform(), -0.1 + 1.2 * rng.uniform(), -0.1 + 1.2 * rng.uniform()});
    Tensor sa = trilinear_sample(a, p), sb = trilinear_sample(b, p), sc = trilinear_sample(c, p);
    for (int ch = 0; ch < vs[0]; ++ch)
      expect(std::fabs(sc.at({ch}) - (0.7 * sa.at({ch}) - 1.3 * sb.at({ch}))) <= 1e-10,
             "linearity violated");
  }
  detail = "4 shapes x 1000 points <= 1e-12, grid exact, linearity <= 1e-10";
}

// ---------------------------------------------------------------- gate 3

void gate_sampling_identities(std::string& detail) {
  // row-stochastic weights away from initialization
  {
    Rng rng(71);
    SamplerConfig sc;
    sc.d = 16;
    sc.n_queries = 4;
    sc.n_heads = 2;
    sc.n_points = 4;
    sc.n_layers = 2;
    sc.ffn_mult = 2;
    ParamStore store;
    DeformableSampler s = DeformableSampler::make(store, "s", sc, rng);
    for (Parameter& p : store.all())
      if (p.name.find(".attn.") != std::string::npos) {
        Tensor t = p.value;
        for (double& v : t.mutable_data()) v = rng.normal();
      }
    FeatureVolume vol = random_volume({sc.d, 5, 4, 3}, rng);
    SampledTokenSet ts = s.sample_visual_tokens(vol, Tensor::randn({6, sc.d}, rng));
    for (const auto& per_layer : ts.weights)
      for (const Tensor& w : per_layer)
        for (int q = 0; q < w.dim(0); ++q) {
          double sum = 0.0;
          for (int k = 0; k < w.dim(1); ++k) sum += w.at({q, k});
          expect(std::fabs(sum - 1.0) <= 1e-6,
                 "weight row sums to " + std::to_string(sum));
        }
  }
  // M = K = 1 closed form
  {
    Rng rng(72);
    SamplerConfig sc;
    sc.d = 8;
    sc.n_queries = 3;
    sc.n_heads = 1;
    sc.n_points = 1;
    sc.n_layers = 1;
    sc.ffn_mult = 2;
    ParamStore store;
    DeformableSampler s = DeformableSampler::make(store, "s", sc, rng);
    Shape vs = {sc.d, 4, 3, 3};
    FeatureVolume vol = random_volume(vs, rng);
    SampledTokenSet ts = s.sample_visual_tokens(vol, Tensor::randn({5, sc.d}, rng));
    const Tensor& loc = ts.locations[0][0];
    for (int q = 0; q < sc.n_queries; ++q) {
      std::vector<double> x(sc.d);
      for (int c = 0; c < sc.d; ++c)
        x[c] = oracle::trilinear(vol.x.data(), vs[0], vs[1], vs[2], vs[3], c, loc.at({q, 0}),
                                 loc.at({q, 1}), loc.at({q, 2}));
      std::vector<double> v =
          oracle::linear(x, sc.d, s.layers[0].w_val[0].w.data(), s.layers[0].w_val[0].b.data(),
                         s.d_head);
      std::vector<double> y = oracle::linear(v, s.d_head, s.layers[0].w_out[0].w.data(),
                                             s.layers[0].w_out[0].b.data(), sc.d);
      for (int c = 0; c < sc.d; ++c)
        expect(std::fabs(ts.tokens.at({q, c}) - y[c]) <= 1e-12,
               "single-sample reduction mismatch");
    }
  }
  // constant volume erases query identity in the aggregation branch
  {
    Rng rng(73);
    SamplerConfig sc;
    sc.d = 16;
    sc.n_queries = 4;
    sc.n_heads = 2;
    sc.n_points = 4;
    sc.n_layers = 2;
    sc.ffn_mult = 2;
    ParamStore store;
    DeformableSampler s = DeformableSampler::make(store, "s", sc, rng);
    std::vector<double> cv(static_cast<size_t>(sc.d) * 5 * 4 * 3);
    for (int c = 0; c < sc.d; ++c) {
      double val = rng.normal();
      for (int i = 0; i < 5 * 4 * 3; ++i) cv[static_cast<size_t>(c) * 60 + i] = val;
    }
    FeatureVolume vol(Tensor::from_data({sc.d, 5, 4, 3}, std::move(cv)));
    SampledTokenSet ts = s.sample_visual_tokens(vol, Tensor::randn({6, sc.d}, rng));
    for (int q = 1; q < sc.n_queries; ++q)
      for (int c = 0; c < sc.d; ++c)
        expect(std::fabs(ts.tokens.at({q, c}) - ts.tokens.at({0, c})) <= 1e-9,
               "constant volume gave query-dependent tokens");
  }
  detail = "weight rows 1 +- 1e-6, M=K=1 within 1e-12, constant volume within 1e-9";
}

// ---------------------------------------------------------------- gate 4

void gate_regularizer_values(std::string& detail) {
  // orthonormal rows: zero penalty
  std::vector<double> od(3 * 5, 0.0);
  od[0] = od[5 + 1] = od[10 + 2] = 1.0;
  Tensor ortho = Tensor::from_data({3, 5}, std::move(od));
  expect(std::fabs(soft_orthogonality({ortho}, 0.7).value()) <= 1e-12, "SO orthonormal != 0");
  // zero tokens: lambda * N * L_v
  Tensor zeros = Tensor::zeros({3, 5});
  expect(std::fabs(soft_orthogonality({zeros, zeros}, 0.7).value() - 0.7 * 2 * 3) <= 1e-12,
         "SO zero-token value off");

  expect(std::fabs(mcr_regularizer({zeros}, 0.4, 0.5).value()) <= 1e-12, "MCR zero != 0");
  double nsq = 0.3 * 0.3 + 0.2 * 0.2 + 0.6 * 0.6;
  double closed = -0.4 * 0.5 * std::log(1.0 + (3.0 / 0.25) * nsq);
  Tensor one = Tensor::from_data({1, 3}, {0.3, -0.2, 0.6});
  expect(std::fabs(mcr_regularizer({one}, 0.4, 0.5).value() - closed) <= 1e-9,
         "MCR scalar closed form off");

  auto basis_tokens = [](int rows, int d, int axis) {
    std::vector<double> v(static_cast<size_t>(rows) * d, 0.0);
    for (int r = 0; r < rows; ++r) v[static_cast<size_t>(r) * d + axis] = 1.0;
    return Tensor::from_data({rows, d}, std::move(v));
  };
  auto basis_volume = [](int d, int axis) {
    std::vector<double> v(static_cast<size_t>(d) * 8, 0.0);
    for (int i = 0; i < 8; ++i) v[static_cast<size_t>(axis) * 8 + i] = 1.0;
    return FeatureVolume(Tensor::from_data({d, 2, 2, 2}, std::move(v)));
  };
  double got = contrastive_reg({basis_tokens(2, 4, 0), basis_tokens(2, 4, 1)},
                               {basis_volume(4, 0), basis_volume(4, 1)}, 0.3, 0.1)
                   .value();
  expect(std::fabs(got - (-20.0 * 0.3)) <= 1e-9, "contrastive aligned/orthogonal value off");
  detail = "SO exact, MCR closed form 1e-9, contrastive -20*lambda at tau=0.1";
}

// ---------------------------------------------------------------- gate 5

void gate_dependency(std::string& detail) {
  // property test over generated segmentations
  Rng rng(81);
  int parses = 0;
  while (parses < 50) {
    oracle::RandomParse rp = oracle::random_parse(rng);
    DependencyParse p;
    int nw = static_cast<int>(rp.governor.size());
    for (int i = 0; i < nw; ++i) p.words.push_back("w" + std::to_string(i));
    p.governor = rp.governor;
    p.subword_counts = rp.subword_counts;
    Tensor a = reindex_for_subwords(p, 1);
    int n = a.dim(0);
    std::vector<int> first(nw), last(nw);
    int pos = 0;
    for (int w = 0; w < nw; ++w) {
      first[w] = pos;
      pos += p.subword_counts[w];
      last[w] = pos - 1;
    }
    auto one_hot_at = [&](int row, int hot) {
      for (int j = 0; j < n; ++j) {
        double want = j == hot ? 1.0 : 0.0;
        if (a.data()[static_cast<size_t>(row) * n + j] != want) return false;
      }
      return true;
    };
    for (int w = 0; w < nw; ++w) {
      for (int sub = first[w]; sub < last[w]; ++sub)
        expect(one_hot_at(sub, sub + 1), "inner subword must point at its right neighbor");
      int target = p.governor[w] == -1 ? last[w] : last[p.governor[w]];
      expect(one_hot_at(last[w], target), "rightmost subword must point at the governor");
    }
    expect(one_hot_at(n - 1, n - 1), "special token row must be diagonal");
    ++parses;
  }

  // exact gather and gold-mode gradient blackout
  ParamStore store;
  Rng init(82);
  DepConfig dc;
  dc.n_layers = 2;
  dc.n_heads = 2;
  DependencyEncoder enc = DependencyEncoder::make(store, "dep", 8, dc, init);
  DependencyParse p;
  p.words = {"which", "shape", "appeared", "first"};
  p.governor = {1, 2, -1, 2};
  p.subword_counts = {1, 1, 2, 1};
  Tensor adj = reindex_for_subwords(p);
  Tensor o = Tensor::randn({5, 8}, rng);
  Tensor head = enc.dependency_head(o, adj);
  Tensor values = enc.layers[0].dep.wv.forward(o);
  int governor_of[5] = {1, 3, 3, 3, 3};
  for (int i = 0; i < 5; ++i)
    for (int c = 0; c < 4; ++c)
      expect(head.at({i, c}) == values.at({governor_of[i], c}), "gather not exact");

  Tensor x = Tensor::randn({5, 8}, rng, 1.0, true);
  store.zero_grad();
  backward(sum_all(enc.forward(x, adj)));
  for (const char* name : {"dep.layer0.dep.q.w", "dep.layer0.dep.q.b", "dep.layer0.dep.k.w",
                           "dep.layer0.dep.k.b", "dep.layer0.dep.u"}) {
    const Parameter& prm = store.find(name);
    if (!prm.value.has_grad()) continue;
    for (double g : prm.value.grad())
      expect(g == 0.0, std::string("gold mode leaked gradient into ") + name);
  }
  expect(store.find("dep.layer0.dep.v.w").value.has_grad(),
         "value projection missing from the gold-mode graph");
  detail = "50 segmentations, exact governor gather, zero bi-affine trio gradients";
}

// ---------------------------------------------------------------- gate 6

void gate_memory_model(std::string& detail) {
  double budget = calibrated_budget();
  int base = max_frames_under_budget(CostStrategy::Baseline, budget);
  int sparse = max_frames_under_budget(CostStrategy::Sparse, budget);
  int dsr = max_frames_under_budget(CostStrategy::Dsr, budget);
  expect(base == 60, "baseline calibration anchor is " + std::to_string(base));
  expect(sparse > base, "sparse must outlast the baseline");
  expect(dsr > sparse, "deformable-dense must outlast sparse");

  double c_dsr = strategy_cost_at(CostStrategy::Dsr, 32, 7, 7, 100, 25);
  double c_sparse = strategy_cost_at(CostStrategy::Sparse, 32, 7, 7, 100, 25);
  double c_base = strategy_cost_at(CostStrategy::Baseline, 32, 7, 7, 100, 25);
  expect(c_dsr < c_sparse && c_sparse < c_base, "cost order at 32 frames broken");
  std::ostringstream os;
  os << "max frames " << base << " / " << sparse << " / " << dsr << ", costs at T=32 "
     << c_dsr << " < " << c_sparse << " < " << c_base;
  detail = os.str();
}

// ------------------------------------------------------- gates 7 and 8

struct SweepOutcome {
  ExperimentConfig cfg;
  ExperimentReport rep;
  double seconds = 0.0;
};

const SweepOutcome& shared_sweep() {
  static std::unique_ptr<SweepOutcome> cached;
  if (!cached) {
    SweepOutcome out;
    out.cfg.task = SyntheticTaskConfig{};  // 32 frames, 4x4, d=64, 6 archetypes
    out.cfg.task.n_train = kSweepTrain;
    out.cfg.task.n_test = kSweepTest;
    RegConfig so;
    so.kind = RegKind::SO;
    so.lambda = kSoLambda;
    RegConfig none;
    none.kind = RegKind::None;
    out.cfg.strategies = {StrategySpec{"dense-so", Strategy::DeformableDense, 4, so},
                          StrategySpec{"dense-none", Strategy::DeformableDense, 4, none},
                          StrategySpec{"sparse-1", Strategy::SparseRandom, 1, none},
                          StrategySpec{"sparse-4", Strategy::SparseRandom, 4, none}};
    out.cfg.n_seeds = kSweepSeeds;
    out.cfg.train.epochs = kSweepEpochs;
    out.cfg.train.batch_size = kSweepBatch;
    out.cfg.train.optim.lr = kSweepLr;
    auto t0 = std::chrono::steady_clock::now();
    out.rep = run_experiment(out.cfg);
    out.seconds = seconds_since(t0);
    cached = std::make_unique<SweepOutcome>(std::move(out));
  }
  return *cached;
}

void gate_strategy_direction(std::string& detail) {
  const SweepOutcome& sw = shared_sweep();
  expect(sw.seconds < kSweepBudgetSeconds,
         "sweep took " + std::to_string(sw.seconds) + "s, budget " +
             std::to_string(kSweepBudgetSeconds));
  for (const TrialResult& t : sw.rep.trials)
    expect(!t.diverged, t.strategy + " seed " + std::to_string(t.seed_index) +
                            " diverged: " + t.error);
  double dense = sw.rep.mean_accuracy("dense-so");
  std::ostringstream os;
  os << "dense-so " << dense;
  for (const std::string arm : {"sparse-1", "sparse-4"}) {
    double mean = sw.rep.mean_accuracy(arm);
    int wins = sw.rep.wins("dense-so", arm);
    os << ", " << arm << " " << mean << " (wins " << wins << "/" << kSweepSeeds << ")";
    expect(dense > mean, "dense-so mean " + std::to_string(dense) +
                             " not above " + arm + " mean " + std::to_string(mean));
    expect(wins >= 4, "dense-so beats " + arm + " in only " + std::to_string(wins) + "/" +
                          std::to_string(kSweepSeeds) + " paired seeds");
  }
  os << ", " << static_cast<int>(sw.seconds) << "s";
  detail = os.str();
}

void gate_regularizer_direction(std::string& detail) {
  const SweepOutcome& sw = shared_sweep();
  auto so = sw.rep.trials_for("dense-so");
  auto none = sw.rep.trials_for("dense-none");
  expect(static_cast<int>(so.size()) == kSweepSeeds &&
             static_cast<int>(none.size()) == kSweepSeeds,
         "ablation arms incomplete");
  double gram_so = 0.0, gram_none = 0.0, dist_so = 0.0, dist_none = 0.0;
  int acc_direction = 0;
  for (int seed = 0; seed < kSweepSeeds; ++seed) {
    const TrialResult* a = nullptr;
    const TrialResult* b = nullptr;
    for (const TrialResult* t : so)
      if (t->seed_index == seed) a = t;
    for (const TrialResult* t : none)
      if (t->seed_index == seed) b = t;
    expect(a && b && !a->diverged && !b->diverged, "ablation pair missing for a seed");
    expect(a->has_diversity && b->has_diversity, "diversity metrics missing");
    gram_so += a->mean_abs_offdiag_gram;
    gram_none += b->mean_abs_offdiag_gram;
    dist_so += a->min_pairwise_location_distance;
    dist_none += b->min_pairwise_location_distance;
    if (a->test_accuracy >= b->test_accuracy) ++acc_direction;
  }
  gram_so /= kSweepSeeds;
  gram_none /= kSweepSeeds;
  dist_so /= kSweepSeeds;
  dist_none /= kSweepSeeds;
  expect(gram_so < gram_none, "SO off-diagonal Gram " + std::to_string(gram_so) +
                                  " not below " + std::to_string(gram_none));
  expect(dist_so > dist_none, "SO min location distance " + std::to_string(dist_so) +
                                  " not above " + std::to_string(dist_none));
  expect(acc_direction >= 3, "SO accuracy direction holds in only " +
                                 std::to_string(acc_direction) + "/" +
                                 std::to_string(kSweepSeeds) + " seeds");
  std::ostringstream os;
  os << "gram " << gram_so << " < " << gram_none << ", distance " << dist_so << " > "
     << dist_none << ", accuracy direction " << acc_direction << "/" << kSweepSeeds;
  detail = os.str();
}

// ---------------------------------------------------------------- gate 9

std::vector<double> overfit_losses(int* steps_to_target) {
  SyntheticTaskConfig tc;  // desk defaults: 32 frames, 4x4, d=64
  tc.n_train = 1;
  tc.n_test = 1;
  tc.seed = 91;
  TaskDataset ds = generate_task(tc);
  LabeledExample ex = ds.train_examples()[0];

  QaModel m = QaModel::make(ModelConfig::desk(tc.n_archetypes));
  OptimConfig oc;
  oc.lr = kOverfitLr;
  oc.weight_decay = 0.0;
  AdamW opt(m.store, oc);
  std::vector<double> losses;
  *steps_to_target = -1;
  for (int step = 1; step <= kOverfitMaxSteps; ++step) {
    m.store.zero_grad();
    Tensor loss = cross_entropy(m.qa_forward(ex.video, ex.question).logits, ex.label);
    losses.push_back(loss.value());
    if (loss.value() < kOverfitTarget) {
      *steps_to_target = step;
      break;
    }
    backward(loss);
    opt.step(m.store);
  }
  return losses;
}

void gate_overfit(std::string& detail) {
  int steps1 = -1, steps2 = -1;
  std::vector<double> run1 = overfit_losses(&steps1);
  expect(steps1 > 0, "answer loss still " + std::to_string(run1.back()) + " after " +
                         std::to_string(kOverfitMaxSteps) + " steps");
  std::vector<double> run2 = overfit_losses(&steps2);
  expect(steps1 == steps2 && run1.size() == run2.size(), "rerun step counts differ");
  for (size_t i = 0; i < run1.size(); ++i)
    expect(run1[i] == run2[i], "rerun diverges at step " + std::to_string(i + 1));
  std::ostringstream os;
  os << "loss " << run1.front() << " -> " << run1.back() << " in " << steps1
     << " steps, rerun bit-identical";
  detail = os.str();
}

}  // namespace

int main() {
  struct Gate {
    int id;
    const char* label;
    std::function<void(std::string&)> run;
  };
  std::vector<Gate> gates = {
      {1, "gradient suite", gate_gradient_suite},
      {2, "interpolation oracle", gate_interpolation_oracle},
      {3, "sampling identities", gate_sampling_identities},
      {4, "regularizer values", gate_regularizer_values},
      {5, "dependency constraints", gate_dependency},
      {6, "memory-model ordering", gate_memory_model},
      {7, "dense beats sparse sampling", gate_strategy_direction},
      {8, "diversity regularization direction", gate_regularizer_direction},
      {9, "single-example overfit", gate_overfit},
  };
  int failed = 0;
  for (Gate& g : gates) {
    std::string detail;
    try {
      g.run(detail);
      std::cout << "[PASS] " << g.id << " " << g.label;
      if (!detail.empty()) std::cout << " (" << detail << ")";
      std::cout << "\n";
    } catch (const std::exception& e) {
      ++failed;
      std::cout << "[FAIL] " << g.id << " " << g.label << ": " << e.what() << "\n";
    }
    std::cout.flush();
  }
  if (failed != 0) std::cout << failed << " gate(s) failed\n";
  return failed;
}
