#include "dsr/selfcheck.hpp"

#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "dsr/dependency.hpp"
#include "dsr/experiment.hpp"
#include "dsr/grad_check.hpp"
#include "dsr/memory_model.hpp"
#include "dsr/model.hpp"
#include "dsr/sampler.hpp"
#include "dsr/serialize.hpp"
#include "dsr/synthetic.hpp"

namespace dsr {

namespace {

void expect(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

void expect_near(double a, double b, double tol, const std::string& what) {
  if (!(std::abs(a - b) <= tol)) {
    std::ostringstream os;
    os.precision(17);
    os << what << ": " << a << " vs " << b << " (tol " << tol << ")";
    fail(os.str());
  }
}

void expect_grad(const GradCheckResult& r, const std::string& what) {
  if (!r.ok) fail(what + ": worst " + r.worst);
}

// independent 8-corner blend used to cross-check the sampler's interpolation
double oracle_trilinear(const FeatureVolume& vol, int c, double tu, double yu, double xu) {
  auto axis = [](double u, int n, int& lo, double& f) {
    if (u < 0.0) u = 0.0;
    if (u > 1.0) u = 1.0;
    if (n == 1) {
      lo = 0;
      f = 0.0;
      return;
    }
    double s = u * (n - 1);
    lo = static_cast<int>(std::floor(s));
    if (lo > n - 2) lo = n - 2;
    f = s - lo;
    if (u == static_cast<double>(lo) / (n - 1)) f = 0.0;
    else if (u == static_cast<double>(lo + 1) / (n - 1)) f = 1.0;
  };
  int t0, y0, x0;
  double ft, fy, fx;
  axis(tu, vol.t(), t0, ft);
  axis(yu, vol.h(), y0, fy);
  axis(xu, vol.w(), x0, fx);
  double acc = 0.0;
  for (int dt = 0; dt < 2; ++dt)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        double wgt = (dt ? ft : 1.0 - ft) * (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
        int ti = std::min(t0 + dt, vol.t() - 1);
        int yi = std::min(y0 + dy, vol.h() - 1);
        int xi = std::min(x0 + dx, vol.w() - 1);
        acc += wgt * vol.x.at({c, ti, yi, xi});
      }
  return acc;
}

FeatureVolume random_volume(Shape s, Rng& rng, bool requires_grad = false) {
  return FeatureVolume(Tensor::randn(s, rng, 1.0, requires_grad));
}

void check_elementwise_grads() {
  Rng rng(11);
  Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
  Tensor b = Tensor::randn({3, 4}, rng, 1.0, true);
  auto f = [&]() {
    return sum_all(mul(sigmoid(a), add(gelu(b), exp(scale(a, 0.3)))));
  };
  GradCheckOptions opt;
  opt.rel_tol = 1e-6;
  expect_grad(finite_diff_check(f, {{"a", a}, {"b", b}}, opt), "elementwise");
}

void check_core_grads() {
  Rng rng(12);
  Tensor a = Tensor::randn({3, 5}, rng, 1.0, true);
  Tensor b = Tensor::randn({5, 4}, rng, 1.0, true);
  Tensor g = Tensor::randn({4}, rng, 0.2, true);
  Tensor bias = Tensor::randn({4}, rng, 0.2, true);
  Tensor m = Tensor::randn({3, 4}, rng);
  auto f = [&]() {
    return sum_all(mul(softmax(layer_norm(matmul(a, b), g, bias), 1), m));
  };
  GradCheckOptions opt;
  opt.rel_tol = 1e-5;
  expect_grad(finite_diff_check(f, {{"a", a}, {"b", b}, {"g", g}, {"bias", bias}}, opt),
              "matmul/layer_norm/softmax");

  Tensor c = Tensor::randn({3, 3}, rng, 0.5, true);
  auto fd = [&]() {
    return logdet_spd(add(matmul(c, transpose(c)), scale(Tensor::identity(3), 2.0)));
  };
  GradCheckOptions opt2;
  opt2.rel_tol = 1e-5;
  expect_grad(finite_diff_check(fd, {{"c", c}}, opt2), "logdet");
}

void check_trilinear_oracle() {
  Rng rng(13);
  FeatureVolume vol = random_volume({3, 4, 3, 2}, rng);
  for (int i = 0; i < 200; ++i) {
    double tu = rng.uniform(), yu = rng.uniform(), xu = rng.uniform();
    Tensor p = Tensor::from_data({3}, {tu, yu, xu});
    Tensor s = trilinear_sample(vol, p);
    for (int c = 0; c < 3; ++c)
      expect_near(s.at({c}), oracle_trilinear(vol, c, tu, yu, xu), 1e-12, "oracle blend");
  }
  for (int t = 0; t < vol.t(); ++t)
    for (int y = 0; y < vol.h(); ++y)
      for (int x = 0; x < vol.w(); ++x) {
        Tensor p = Tensor::from_data(
            {3}, {static_cast<double>(t) / (vol.t() - 1), static_cast<double>(y) / (vol.h() - 1),
                  static_cast<double>(x) / (vol.w() - 1)});
        Tensor s = trilinear_sample(vol, p);
        for (int c = 0; c < 3; ++c)
          expect(s.at({c}) == vol.x.at({c, t, y, x}), "grid point not exact");
      }
  FeatureVolume vol2 = random_volume({3, 4, 3, 2}, rng);
  Tensor mix = FeatureVolume(add(scale(vol.x, 0.3), scale(vol2.x, -1.7))).x;
  for (int i = 0; i < 50; ++i) {
    Tensor p = Tensor::from_data({3}, {rng.uniform(), rng.uniform(), rng.uniform()});
    Tensor sm = trilinear_sample(FeatureVolume(mix), p);
    Tensor s1 = trilinear_sample(vol, p);
    Tensor s2 = trilinear_sample(vol2, p);
    for (int c = 0; c < 3; ++c)
      expect_near(sm.at({c}), 0.3 * s1.at({c}) - 1.7 * s2.at({c}), 1e-10, "linearity");
  }
}

void check_trilinear_grads() {
  Rng rng(14);
  FeatureVolume vol = random_volume({2, 4, 3, 3}, rng, true);
  std::vector<double> pd;
  for (int i = 0; i < 5 * 3; ++i) pd.push_back(0.1 + 0.8 * rng.uniform());
  Tensor pts = Tensor::from_data({5, 3}, std::move(pd), true);
  Tensor m = Tensor::randn({5, 2}, rng);
  auto f = [&]() { return sum_all(mul(trilinear_sample_many(vol, pts), m)); };
  GradCheckOptions opt;
  opt.rel_tol = 1e-4;
  expect_grad(finite_diff_check(f, {{"volume", vol.x}, {"points", pts}}, opt), "trilinear");
}

SamplerConfig small_sampler_config() {
  SamplerConfig sc;
  sc.d = 16;
  sc.n_queries = 4;
  sc.n_heads = 2;
  sc.n_points = 4;
  sc.n_layers = 2;
  sc.ffn_mult = 2;
  return sc;
}

void check_attention_identities() {
  Rng rng(15);
  SamplerConfig sc = small_sampler_config();
  ParamStore store;
  DeformableSampler sampler = DeformableSampler::make(store, "s", sc, rng);
  FeatureVolume vol = random_volume({sc.d, 5, 4, 3}, rng);
  Tensor question = Tensor::randn({6, sc.d}, rng);
  SampledTokenSet ts = sampler.sample_visual_tokens(vol, question);
  for (const auto& per_layer : ts.weights)
    for (const Tensor& w : per_layer)
      for (int q = 0; q < w.dim(0); ++q) {
        double s = 0.0;
        for (int k = 0; k < w.dim(1); ++k) s += w.at({q, k});
        expect_near(s, 1.0, 1e-6, "weight row sum");
      }

  std::vector<double> cv(static_cast<size_t>(sc.d) * 5 * 4 * 3);
  Rng crng(16);
  for (int c = 0; c < sc.d; ++c) {
    double v = crng.normal();
    for (int i = 0; i < 5 * 4 * 3; ++i) cv[static_cast<size_t>(c) * 60 + i] = v;
  }
  FeatureVolume constant(Tensor::from_data({sc.d, 5, 4, 3}, std::move(cv)));
  SampledTokenSet tc = sampler.sample_visual_tokens(constant, question);
  for (int q = 1; q < tc.tokens.dim(0); ++q)
    for (int c = 0; c < sc.d; ++c)
      expect_near(tc.tokens.at({q, c}), tc.tokens.at({0, c}), 1e-9,
                  "constant volume token mismatch");
}

void check_single_point_reduction() {
  Rng rng(17);
  SamplerConfig sc;
  sc.d = 8;
  sc.n_queries = 3;
  sc.n_heads = 1;
  sc.n_points = 1;
  sc.n_layers = 1;
  sc.ffn_mult = 2;
  ParamStore store;
  DeformableSampler sampler = DeformableSampler::make(store, "s", sc, rng);
  FeatureVolume vol = random_volume({sc.d, 4, 3, 3}, rng);
  Tensor question = Tensor::randn({5, sc.d}, rng);
  SampledTokenSet ts = sampler.sample_visual_tokens(vol, question);
  const Tensor& loc = ts.locations[0][0];
  NoGradGuard ng;
  for (int q = 0; q < sc.n_queries; ++q) {
    expect_near(ts.weights[0][0].at({q, 0}), 1.0, 1e-12, "single-point weight");
    Tensor x = trilinear_sample(vol, row(loc, q));
    Tensor manual = sampler.layers[0].w_out[0].forward(sampler.layers[0].w_val[0].forward(x));
    for (int c = 0; c < sc.d; ++c)
      expect_near(ts.tokens.at({q, c}), manual.at({c}), 1e-12, "M=K=1 reduction");
  }
}

void check_regularizer_values() {
  int d = 5;
  std::vector<double> ortho(3 * d, 0.0);
  ortho[0 * d + 0] = 1.0;
  ortho[1 * d + 1] = 1.0;
  ortho[2 * d + 2] = 1.0;
  Tensor on = Tensor::from_data({3, d}, std::move(ortho));
  expect_near(soft_orthogonality({on}, 0.7).value(), 0.0, 1e-12, "SO orthonormal");
  Tensor zs = Tensor::zeros({3, d});
  expect_near(soft_orthogonality({zs, zs}, 0.7).value(), 0.7 * 2 * 3, 1e-12, "SO zero tokens");

  expect_near(mcr_regularizer({zs}, 0.4, 0.5).value(), 0.0, 1e-12, "MCR zero tokens");
  Tensor one = Tensor::from_data({1, 3}, {0.3, -0.2, 0.6});
  double nsq = 0.3 * 0.3 + 0.2 * 0.2 + 0.6 * 0.6;
  double alpha = 3.0 / (1.0 * 0.5 * 0.5);
  expect_near(mcr_regularizer({one}, 0.4, 0.5).value(), -0.4 * 0.5 * std::log(1 + alpha * nsq),
              1e-9, "MCR single token");

  int dc = 4;
  auto basis_volume = [&](int axis) {
    std::vector<double> v(static_cast<size_t>(dc) * 2 * 2 * 2, 0.0);
    for (int i = 0; i < 8; ++i) v[static_cast<size_t>(axis) * 8 + i] = 1.0;
    return FeatureVolume(Tensor::from_data({dc, 2, 2, 2}, std::move(v)));
  };
  auto basis_tokens = [&](int axis) {
    std::vector<double> v(static_cast<size_t>(2) * dc, 0.0);
    v[axis] = 1.0;
    v[dc + axis] = 1.0;
    return Tensor::from_data({2, dc}, std::move(v));
  };
  Tensor contr = contrastive_reg({basis_tokens(0), basis_tokens(1)},
                                 {basis_volume(0), basis_volume(1)}, 0.3, 0.1);
  expect_near(contr.value(), -20.0 * 0.3, 1e-9, "contrastive aligned/orthogonal");
}

void check_regularizer_grads() {
  Rng rng(18);
  Tensor v1 = Tensor::randn({3, 4}, rng, 0.7, true);
  Tensor v2 = Tensor::randn({3, 4}, rng, 0.7, true);
  FeatureVolume x1 = random_volume({4, 2, 2, 2}, rng);
  FeatureVolume x2 = random_volume({4, 2, 2, 2}, rng);
  GradCheckOptions opt;
  opt.rel_tol = 1e-5;
  expect_grad(finite_diff_check([&]() { return soft_orthogonality({v1, v2}, 0.5); },
                                {{"v1", v1}, {"v2", v2}}, opt),
              "SO gradient");
  expect_grad(finite_diff_check([&]() { return mcr_regularizer({v1, v2}, 0.5, 0.5); },
                                {{"v1", v1}, {"v2", v2}}, opt),
              "MCR gradient");
  expect_grad(
      finite_diff_check([&]() { return contrastive_reg({v1, v2}, {x1, x2}, 0.5, 0.1); },
                        {{"v1", v1}, {"v2", v2}}, opt),
      "contrastive gradient");
}

DependencyParse sample_parse() {
  DependencyParse p;
  p.words = {"which", "event", "occurred", "before", "event", "alpha"};
  p.governor = {1, 2, -1, 2, 3, 4};
  p.subword_counts = {1, 1, 2, 1, 1, 2};
  return p;
}

void check_dependency_constraints() {
  DependencyParse p = sample_parse();
  Tensor adj = build_adjacency(p);
  for (int i = 0; i < adj.dim(0); ++i) {
    double s = 0.0;
    for (int j = 0; j < adj.dim(1); ++j) {
      double v = adj.at({i, j});
      expect(v == 0.0 || v == 1.0, "adjacency entry not binary");
      s += v;
    }
    expect(s == 1.0, "adjacency row not one-hot");
  }

  Tensor sub = reindex_for_subwords(p, 2);
  int n = p.n_subwords();
  expect(sub.dim(0) == n + 2 && sub.dim(1) == n + 2, "subword adjacency shape");
  std::vector<int> first(p.n_words()), last(p.n_words());
  int pos = 0;
  for (int wi = 0; wi < p.n_words(); ++wi) {
    first[wi] = pos;
    pos += p.subword_counts[wi];
    last[wi] = pos - 1;
  }
  for (int wi = 0; wi < p.n_words(); ++wi) {
    int target = p.governor[wi] < 0 ? last[wi] : last[p.governor[wi]];
    expect(sub.at({last[wi], target}) == 1.0, "rightmost subword rule");
    for (int s = first[wi]; s < last[wi]; ++s)
      expect(sub.at({s, s + 1}) == 1.0, "non-rightmost subword rule");
  }
  for (int s = n; s < n + 2; ++s) expect(sub.at({s, s}) == 1.0, "special token self-loop");

  Rng rng(19);
  int d = 8;
  ParamStore store;
  DepConfig dc;
  dc.n_layers = 2;
  dc.n_heads = 2;
  dc.gold = true;
  DependencyEncoder enc = DependencyEncoder::make(store, "dep", d, dc, rng);
  Tensor q = Tensor::randn({n, d}, rng);
  Tensor adj_sub = reindex_for_subwords(p, 0);

  Tensor vvals = enc.layers[0].dep.wv.forward(q);
  Tensor head = enc.dependency_head(q, adj_sub);
  for (int i = 0; i < n; ++i) {
    int gv = -1;
    for (int j = 0; j < n; ++j)
      if (adj_sub.at({i, j}) == 1.0) gv = j;
    for (int c = 0; c < enc.d_head; ++c)
      expect(head.at({i, c}) == vvals.at({gv, c}), "gold head is not a governor gather");
  }

  Tensor out = enc.forward(q, adj_sub);
  backward(sum_all(out));
  for (const char* name : {"dep.layer0.dep.q.w", "dep.layer0.dep.q.b", "dep.layer0.dep.k.w",
                           "dep.layer0.dep.k.b", "dep.layer0.dep.u"}) {
    const Parameter& prm = store.find(name);
    if (!prm.value.has_grad()) continue;
    for (double g : prm.value.grad()) expect(g == 0.0, std::string(name) + " has gradient");
  }
  const Parameter& wv = store.find("dep.layer0.dep.v.w");
  expect(wv.value.has_grad(), "gold-mode value projection missing gradient");
}

void check_biaffine_grads() {
  Rng rng(20);
  int d = 8, n = 5;
  ParamStore store;
  DepConfig dc;
  dc.n_layers = 1;
  dc.n_heads = 2;
  dc.gold = false;
  DependencyEncoder enc = DependencyEncoder::make(store, "dep", d, dc, rng);
  Tensor q = Tensor::randn({n, d}, rng, 1.0, true);
  Tensor m = Tensor::randn({n, n}, rng);
  auto f = [&]() { return sum_all(mul(enc.biaffine_scores(q), m)); };
  std::vector<std::pair<std::string, Tensor>> leaves = {
      {"tokens", q},
      {"wq", store.find("dep.layer0.dep.q.w").value},
      {"u", store.find("dep.layer0.dep.u").value}};
  GradCheckOptions opt;
  opt.rel_tol = 1e-5;
  expect_grad(finite_diff_check(f, leaves, opt), "biaffine");
  Tensor scores = enc.biaffine_scores(q);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += scores.at({i, j});
    expect_near(s, 1.0, 1e-6, "biaffine row sum");
  }
}

void check_memory_model() {
  CostModelInput in;
  in.strategy = CostStrategy::Dsr;
  CostModelOutput out = memory_cost(in);
  expect(out.sequence == 157, "dsr sequence != 157");
  in.strategy = CostStrategy::Baseline;
  out = memory_cost(in);
  expect(out.sequence == 1668, "baseline sequence != 1668");

  double budget = calibrated_budget();
  int fb = max_frames_under_budget(CostStrategy::Baseline, budget);
  int fs = max_frames_under_budget(CostStrategy::Sparse, budget);
  int fd = max_frames_under_budget(CostStrategy::Dsr, budget);
  expect(fb == 60, "baseline max frames != 60");
  expect(fs > fb, "sparse max frames not above baseline");
  expect(fd > fs, "dsr max frames not above sparse");

  double cb = strategy_cost_at(CostStrategy::Baseline, 32, 7, 7, 100, 25);
  double cs = strategy_cost_at(CostStrategy::Sparse, 32, 7, 7, 100, 25);
  double cd = strategy_cost_at(CostStrategy::Dsr, 32, 7, 7, 100, 25);
  expect(cd < cs && cs < cb, "cost ordering at 32 frames broken");

  for (CostStrategy s : {CostStrategy::Baseline, CostStrategy::Sparse, CostStrategy::Dsr}) {
    double prev = strategy_cost_at(s, 2, 7, 7, 100, 25);
    for (int t = 3; t <= 256; ++t) {
      double cur = strategy_cost_at(s, t, 7, 7, 100, 25);
      expect(cur > prev, "cost not strictly increasing in t");
      prev = cur;
    }
  }
}

SyntheticTaskConfig small_task() {
  SyntheticTaskConfig tc;
  tc.t = 8;
  tc.h = 3;
  tc.w = 3;
  tc.d = 8;
  tc.n_archetypes = 3;
  tc.events_per_video = 2;
  tc.event_duration = 2;
  tc.event_extent = 1;
  tc.n_train = 12;
  tc.n_test = 6;
  tc.seed = 5;
  return tc;
}

void check_generator() {
  SyntheticTaskConfig tc = small_task();
  TaskDataset a = generate_task(tc);
  TaskDataset b = generate_task(tc);
  expect(a.train.size() == 12 && a.test.size() == 6, "split sizes");
  for (size_t i = 0; i < a.train.size(); ++i) {
    expect(a.train[i].video.x.data() == b.train[i].video.x.data(), "regeneration not identical");
    expect(a.train[i].label == b.train[i].label, "labels not identical");
  }
  std::vector<int> hist(tc.n_archetypes, 0);
  for (const TaskExample& ex : a.train) {
    expect(recompute_answer(ex) == ex.label, "ground-truth round trip");
    ++hist[ex.label];
  }
  for (const TaskExample& ex : a.test) expect(recompute_answer(ex) == ex.label, "test round trip");
  int lo = hist[0], hi = hist[0];
  for (int h : hist) {
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  }
  expect(hi - lo <= 1, "answer histogram unbalanced");
}

void check_serialization() {
  ModelConfig mc = ModelConfig::tiny(3);
  QaModel m1 = QaModel::make(mc);
  std::string path = "/tmp/dsr_selfcheck_ckpt.bin";
  save_checkpoint(path, m1.store, mc.hash());
  ModelConfig mc2 = mc;
  mc2.init_seed = 77;
  QaModel m2 = QaModel::make(mc2);
  load_checkpoint(path, m2.store, mc.hash());
  for (size_t i = 0; i < m1.store.all().size(); ++i)
    expect(m1.store.all()[i].value.data() == m2.store.all()[i].value.data(),
           "checkpoint round trip");
  bool threw = false;
  try {
    load_checkpoint(path, m2.store, mc.hash() + 1);
  } catch (const Error&) {
    threw = true;
  }
  expect(threw, "hash mismatch not detected");

  auto kv = parse_kv_text("a = 1\n# comment\nb=two words\n\nc = 3 # trailing\n");
  expect(kv.size() == 3 && kv["a"] == "1" && kv["b"] == "two words" && kv["c"] == "3",
         "kv parse");
}

void check_end_to_end_grads() {
  SyntheticTaskConfig tc = small_task();
  TaskDataset ds = generate_task(tc);
  ModelConfig mc = ModelConfig::tiny(tc.n_archetypes);
  QaModel model = QaModel::make(mc);
  const TaskExample& ex = ds.train[0];
  auto f = [&]() {
    QaOutput out = model.qa_forward(ex.video, ex.question);
    return total_loss(out.logits, ex.label, {out.tokens.tokens}, {ex.video}, mc.reg);
  };
  std::vector<std::pair<std::string, Tensor>> leaves = {
      {"queries", model.store.find("sampler.queries").value},
      {"ref_proj", model.store.find("sampler.ref.w").value},
      {"head", model.store.find("head.fc2.w").value}};
  GradCheckOptions opt;
  opt.rel_tol = 1e-4;
  opt.max_coords = 6;
  opt.seed = 77;
  expect_grad(finite_diff_check(f, leaves, opt), "end-to-end");
}

void check_train_determinism() {
  SyntheticTaskConfig tc = small_task();
  TaskDataset ds = generate_task(tc);
  std::vector<LabeledExample> data = ds.train_examples();
  data.resize(4);
  auto one = [&]() {
    ModelConfig mc = ModelConfig::tiny(tc.n_archetypes);
    QaModel model = QaModel::make(mc);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    return train_model(model, data, cfg);
  };
  TrainResult r1 = one();
  TrainResult r2 = one();
  expect(r1.steps.size() == r2.steps.size(), "step counts differ");
  for (size_t i = 0; i < r1.steps.size(); ++i)
    expect(r1.steps[i].loss == r2.steps[i].loss, "training not bit-reproducible");
}

}  // namespace

int run_selfcheck(std::ostream& os) {
  struct Check {
    const char* name;
    std::function<void()> fn;
  };
  const std::vector<Check> checks = {
      {"elementwise gradients", check_elementwise_grads},
      {"matmul, layer norm, softmax, logdet gradients", check_core_grads},
      {"trilinear interpolation vs 8-corner oracle", check_trilinear_oracle},
      {"trilinear gradients", check_trilinear_grads},
      {"sampling weight normalization and constant-volume invariance",
       check_attention_identities},
      {"single-head single-point reduction", check_single_point_reduction},
      {"regularizer closed forms", check_regularizer_values},
      {"regularizer gradients", check_regularizer_grads},
      {"dependency adjacency and gold constraints", check_dependency_constraints},
      {"learned bi-affine scores", check_biaffine_grads},
      {"memory cost model", check_memory_model},
      {"task generator", check_generator},
      {"serialization", check_serialization},
      {"end-to-end gradients", check_end_to_end_grads},
      {"training determinism", check_train_determinism},
  };
  int failures = 0;
  for (const Check& c : checks) {
    try {
      c.fn();
      os << "[ok]   " << c.name << "\n";
    } catch (const std::exception& e) {
      ++failures;
      os << "[fail] " << c.name << ": " << e.what() << "\n";
    }
  }
  os << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed")
     << "\n";
  return failures;
}

}  // namespace dsr
