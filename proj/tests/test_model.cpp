#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsr/model.hpp"
#include "dsr/serialize.hpp"
#include "dsr/synthetic.hpp"

using namespace dsr;

namespace {

constexpr double kPi = 3.14159265358979323846;

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
  tc.n_train = 8;
  tc.n_test = 4;
  tc.seed = 5;
  return tc;
}

std::string temp_path(const char* stem) {
  return std::string("model_test_") + stem + ".bin";
}

}  // namespace

TEST_CASE("config validation and hashing") {
  CHECK_NOTHROW(ModelConfig::desk(12).validate());
  CHECK_NOTHROW(ModelConfig::paper_scale(12).validate());
  CHECK_NOTHROW(ModelConfig::tiny(3).validate());

  ModelConfig c = ModelConfig::desk(12);
  CHECK_THROWS_AS(ModelConfig::desk(1).validate(), Error);
  c = ModelConfig::desk(12);
  c.n_heads = 5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ModelConfig::desk(12);
  c.sampler.d = 32;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ModelConfig::desk(12);
  c.use_global = c.use_local = false;
  CHECK_THROWS_AS(c.validate(), Error);

  ModelConfig a = ModelConfig::desk(12), b = ModelConfig::desk(12);
  CHECK(a.hash() == b.hash());
  b.init_seed += 1;
  CHECK(a.hash() != b.hash());
  b = ModelConfig::desk(12);
  b.reg.kind = RegKind::MCR;  // desk default is SO, so pick a different kind
  CHECK(a.hash() != b.hash());
  b = ModelConfig::desk(12);
  b.strategy = Strategy::SparseRandom;
  CHECK(a.hash() != b.hash());
  CHECK(strategy_from_string("dsr") == Strategy::DeformableDense);
  CHECK(strategy_from_string("sparse-random") == Strategy::SparseRandom);
  CHECK(strategy_from_string("baseline") == Strategy::UniformDense);
  CHECK_THROWS_AS((void)strategy_from_string("none-of-these"), Error);
}

TEST_CASE("positional codes separate grid coordinates") {
  int d = 6;
  std::vector<std::array<double, 3>> locs;
  for (int t = 0; t < 5; ++t)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 3; ++x)
        locs.push_back({t / 4.0, y / 3.0, x / 2.0});
  Tensor rows = positional_embedding_3d_rows(locs, d);
  REQUIRE(rows.shape() == Shape({static_cast<int>(locs.size()), d}));
  int n = rows.dim(0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double diff = 0.0;
      for (int c = 0; c < d; ++c) diff = std::max(diff, std::fabs(rows.at({i, c}) - rows.at({j, c})));
      CHECK(diff > 1e-6);
    }
  // scalar and batched variants agree; row index follows the t,y,x loop order
  Tensor one = positional_embedding_3d(0.25, 2.0 / 3.0, 0.5, d);
  for (int c = 0; c < d; ++c)
    CHECK(one.at({c}) == rows.at({1 * 12 + 2 * 3 + 1, c}));

  // d = 7 leaves one zero-padded tail column; the leading band is sin/cos of
  // pi * t
  Tensor r7 = positional_embedding_3d(0.5, 0.0, 1.0, 7);
  CHECK(r7.at({0}) == doctest::Approx(std::sin(kPi * 0.5)).epsilon(1e-14));
  CHECK(r7.at({1}) == doctest::Approx(std::cos(kPi * 0.5)).epsilon(1e-14));
  CHECK(r7.at({6}) == 0.0);

  CHECK_THROWS_AS((void)positional_embedding_3d(-0.1, 0.5, 0.5, 6), Error);
  CHECK_THROWS_AS((void)positional_embedding_3d(0.5, 1.1, 0.5, 6), Error);
  CHECK_THROWS_AS((void)positional_embedding_3d(0.5, 0.5, 0.5, 2), Error);
}

TEST_CASE("model construction registers the expected parameters") {
  QaModel m = QaModel::make(ModelConfig::tiny(3));
  CHECK(m.blocks.size() == 1);
  for (const char* name :
       {"emb.cls", "emb.sep", "emb.type_visual", "emb.type_text", "emb.ln.gain",
        "sampler.queries", "sampler.ref.w", "dep.layer0.dep.u", "encoder.layer0.attn.h0.q.w",
        "encoder.layer0.ln2.bias", "head.fc1.w", "head.fc2.b"})
    CHECK(m.store.contains(name));
  // same seed, same parameters; different seed, different parameters
  QaModel m2 = QaModel::make(ModelConfig::tiny(3));
  CHECK(m.store.find("head.fc1.w").value.data() == m2.store.find("head.fc1.w").value.data());
  ModelConfig other = ModelConfig::tiny(3);
  other.init_seed = 123;
  QaModel m3 = QaModel::make(other);
  CHECK(m.store.find("head.fc1.w").value.data() != m3.store.find("head.fc1.w").value.data());
}

TEST_CASE("question encoding uses the gold adjacency") {
  TaskDataset ds = generate_task(small_task());
  QaModel m = QaModel::make(ModelConfig::tiny(3));
  const QuestionRecord& q = ds.train[0].question;
  Tensor attn;
  Tensor enc = m.encode_question(q, &attn);
  CHECK(enc.shape() == Shape({q.embeddings.dim(0), 8}));
  REQUIRE(attn.shape() == q.adjacency.shape());
  for (int i = 0; i < attn.dim(0); ++i)
    for (int j = 0; j < attn.dim(1); ++j) CHECK(attn.at({i, j}) == q.adjacency.at({i, j}));

  QuestionRecord bad = q;
  bad.embeddings = Tensor::zeros({q.embeddings.dim(0), 9});
  CHECK_THROWS_AS((void)m.encode_question(bad), Error);

  ModelConfig shortq = ModelConfig::tiny(3);
  shortq.max_question_len = 2;
  QaModel ms = QaModel::make(shortq);
  CHECK_THROWS_AS((void)ms.encode_question(q), Error);
}

TEST_CASE("sequence assembly layout") {
  QaModel m = QaModel::make(ModelConfig::tiny(3));
  FusedVisualTokens vis;
  Rng rng(3);
  vis.tokens = Tensor::randn({4, 8}, rng);
  vis.n_global = 1;
  vis.n_local = 3;
  vis.locations = Tensor::from_data(
      {4, 3}, {0.0, 0.5, 0.5, 0.1, 0.2, 0.3, 0.9, 0.8, 0.7, 0.5, 0.5, 0.5});
  Tensor qenc = Tensor::randn({5, 8}, rng);
  Tensor seq = m.assemble_sequence(vis, qenc);
  CHECK(seq.shape() == Shape({1 + 4 + 1 + 5, 8}));

  FusedVisualTokens bad = vis;
  bad.locations = Tensor::from_data({3, 3}, {0.0, 0.5, 0.5, 0.1, 0.2, 0.3, 0.9, 0.8, 0.7});
  CHECK_THROWS_AS((void)m.assemble_sequence(bad, qenc), Error);
  CHECK_THROWS_AS((void)m.assemble_sequence(vis, Tensor::randn({5, 9}, rng)), Error);
}

TEST_CASE("dense forward produces finite logits and sampling records") {
  TaskDataset ds = generate_task(small_task());
  QaModel m = QaModel::make(ModelConfig::tiny(3));
  const TaskExample& ex = ds.train[0];
  QaOutput out = m.qa_forward(ex.video, ex.question);
  REQUIRE(out.logits.shape() == Shape({3}));
  for (int c = 0; c < 3; ++c) CHECK(std::isfinite(out.logits.at({c})));
  CHECK(out.tokens.tokens.dim(0) == m.cfg.sampler.n_queries);
  CHECK(out.tokens.locations.size() == 2);     // sampler layers
  CHECK(out.tokens.locations[0].size() == 2);  // sampler heads
  CHECK(out.dep_attention.dim(0) == ex.question.adjacency.dim(0));

  // dispatch agrees with the direct call
  QaOutput out2 = m.forward(ex.video, ex.question, nullptr);
  CHECK(out2.logits.data() == out.logits.data());
}

TEST_CASE("sparse forward averages clip logits") {
  TaskDataset ds = generate_task(small_task());
  ModelConfig mc = ModelConfig::tiny(3);
  mc.strategy = Strategy::SparseRandom;
  mc.n_clips = 2;
  QaModel m = QaModel::make(mc);
  const TaskExample& ex = ds.train[1];

  Tensor one = m.sparse_random_forward(ex.video, ex.question, {3});
  Tensor twice = m.sparse_random_forward(ex.video, ex.question, {3, 3});
  REQUIRE(one.shape() == Shape({3}));
  for (int c = 0; c < 3; ++c) CHECK(twice.at({c}) == one.at({c}));  // (x + x) / 2 == x

  Tensor other = m.sparse_random_forward(ex.video, ex.question, {0});
  double diff = 0.0;
  for (int c = 0; c < 3; ++c) diff += std::fabs(other.at({c}) - one.at({c}));
  CHECK(diff > 0.0);  // different clip, different evidence

  CHECK_THROWS_AS((void)m.sparse_random_forward(ex.video, ex.question, {}), Error);
  CHECK_THROWS_AS((void)m.sparse_random_forward(ex.video, ex.question, {7}), Error);
  CHECK_THROWS_AS((void)m.sparse_random_forward(ex.video, ex.question, {-1}), Error);

  // strategy dispatch needs the clip stream
  CHECK_THROWS_AS((void)m.forward(ex.video, ex.question, nullptr), Error);
  Rng clip_rng(77);
  QaOutput out = m.forward(ex.video, ex.question, &clip_rng);
  for (int c = 0; c < 3; ++c) CHECK(std::isfinite(out.logits.at({c})));
}

TEST_CASE("clip starts stay in range and follow the stream") {
  ModelConfig mc = ModelConfig::tiny(3);
  mc.strategy = Strategy::SparseRandom;
  mc.n_clips = 3;
  mc.frames_per_clip = 2;
  QaModel m = QaModel::make(mc);
  Rng a(5), b(5);
  std::vector<int> s1 = m.draw_clip_starts(8, a);
  std::vector<int> s2 = m.draw_clip_starts(8, b);
  CHECK(s1 == s2);
  CHECK(s1.size() == 3);
  for (int trial = 0; trial < 50; ++trial)
    for (int s : m.draw_clip_starts(8, a)) {
      CHECK(s >= 0);
      CHECK(s <= 6);
    }
  CHECK_THROWS_AS((void)m.draw_clip_starts(1, a), Error);
}

TEST_CASE("uniform dense forward consumes every frame") {
  TaskDataset ds = generate_task(small_task());
  ModelConfig mc = ModelConfig::tiny(3);
  mc.strategy = Strategy::UniformDense;
  QaModel m = QaModel::make(mc);
  const TaskExample& ex = ds.train[2];
  Tensor logits = m.uniform_dense_forward(ex.video, ex.question);
  REQUIRE(logits.shape() == Shape({3}));
  for (int c = 0; c < 3; ++c) CHECK(std::isfinite(logits.at({c})));
  QaOutput out = m.forward(ex.video, ex.question, nullptr);
  CHECK(out.logits.data() == logits.data());
}

TEST_CASE("loss composition") {
  TaskDataset ds = generate_task(small_task());
  QaModel m = QaModel::make(ModelConfig::tiny(3));
  const TaskExample& ex = ds.train[0];
  QaOutput out = m.qa_forward(ex.video, ex.question);

  RegConfig none;
  none.kind = RegKind::None;
  Tensor plain = total_loss(out.logits, ex.label, {out.tokens.tokens}, {ex.video}, none);
  CHECK(plain.value() == cross_entropy(out.logits, ex.label).value());

  RegConfig so;
  so.kind = RegKind::SO;
  so.lambda = 0.5;
  Tensor with_reg = total_loss(out.logits, ex.label, {out.tokens.tokens}, {ex.video}, so);
  double want = cross_entropy(out.logits, ex.label).value() +
                soft_orthogonality({out.tokens.tokens}, 0.5).value();
  CHECK(with_reg.value() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("training is deterministic and rejects non-finite losses") {
  TaskDataset ds = generate_task(small_task());
  std::vector<LabeledExample> data = ds.train_examples();
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.optim.lr = 1e-3;

  QaModel m1 = QaModel::make(ModelConfig::tiny(3));
  TrainResult r1 = train_model(m1, data, tc);
  QaModel m2 = QaModel::make(ModelConfig::tiny(3));
  TrainResult r2 = train_model(m2, data, tc);
  REQUIRE(r1.steps.size() == r2.steps.size());
  REQUIRE(r1.steps.size() == 4);  // ceil(8/4) * 2 epochs
  for (size_t i = 0; i < r1.steps.size(); ++i) {
    CHECK(r1.steps[i].loss == r2.steps[i].loss);
    CHECK(std::isfinite(r1.steps[i].loss));
  }
  CHECK(r1.final_loss == r2.final_loss);

  // a poisoned video must abort with a diagnostic, not train through NaN
  std::vector<LabeledExample> poisoned = ds.train_examples();
  poisoned[0].video.x.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  QaModel m3 = QaModel::make(ModelConfig::tiny(3));
  AdamW opt(m3.store, tc.optim);
  CHECK_THROWS_WITH_AS(train_epoch(m3, opt, poisoned, tc, 0),
                       doctest::Contains("non-finite"), Error);
}

TEST_CASE("evaluation is deterministic") {
  TaskDataset ds = generate_task(small_task());
  ModelConfig mc = ModelConfig::tiny(3);
  mc.strategy = Strategy::SparseRandom;
  mc.n_clips = 2;
  QaModel m = QaModel::make(mc);
  std::vector<LabeledExample> data = ds.test_examples();
  double a1 = evaluate_accuracy(m, data, 42);
  double a2 = evaluate_accuracy(m, data, 42);
  CHECK(a1 == a2);
  CHECK(a1 >= 0.0);
  CHECK(a1 <= 1.0);
}

TEST_CASE("checkpoints restore parameters exactly") {
  ModelConfig base = ModelConfig::tiny(3);
  QaModel m1 = QaModel::make(base);
  std::string path = temp_path("ckpt");
  save_checkpoint(path, m1.store, base.hash());

  ModelConfig shifted = base;
  shifted.init_seed = 555;
  QaModel m2 = QaModel::make(shifted);
  CHECK(m1.store.find("head.fc1.w").value.data() != m2.store.find("head.fc1.w").value.data());
  load_checkpoint(path, m2.store, base.hash());
  for (size_t i = 0; i < m1.store.all().size(); ++i) {
    const Parameter& p1 = m1.store.all()[i];
    const Parameter& p2 = m2.store.all()[i];
    CHECK(p1.name == p2.name);
    CHECK(p1.value.data() == p2.value.data());
  }

  CHECK_THROWS_WITH_AS(load_checkpoint(path, m2.store, base.hash() + 1),
                       doctest::Contains("hash"), Error);
  CHECK_THROWS_AS(load_checkpoint("does_not_exist.ckpt", m2.store, base.hash()), Error);
  std::remove(path.c_str());
}

TEST_CASE("metrics lines parse back") {
  std::vector<StepMetrics> steps(2);
  steps[0] = {1, 0.75, 0.01, 0.5};
  steps[1] = {2, 0.5, 0.02, 0.625};
  std::string path = temp_path("metrics");
  write_metrics_jsonl(path, steps);
  std::istringstream in(read_text_file(path));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j["step"].get<int>() == steps[n].step);
    CHECK(j["loss"].get<double>() == steps[n].loss);
    CHECK(j["reg"].get<double>() == steps[n].reg);
    CHECK(j["accuracy"].get<double>() == steps[n].accuracy);
    ++n;
  }
  CHECK(n == 2);
  std::remove(path.c_str());
}

TEST_CASE("sample dumps cover every query and point") {
  TaskDataset ds = generate_task(small_task());
  QaModel m = QaModel::make(ModelConfig::tiny(3));
  QaOutput out = m.qa_forward(ds.train[0].video, ds.train[0].question);
  std::string path = temp_path("samples");
  write_sample_dump(path, out.tokens);
  std::istringstream in(read_text_file(path));
  std::string line;
  int refs = 0, samples = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    std::string kind = j["kind"].get<std::string>();
    if (kind == "ref") {
      ++refs;
    } else {
      REQUIRE(kind == "sample");
      ++samples;
      double t = j["t"].get<double>(), y = j["y"].get<double>(), x = j["x"].get<double>();
      CHECK(t >= 0.0);
      CHECK(t <= 1.0);
      CHECK(y >= 0.0);
      CHECK(y <= 1.0);
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
      CHECK(j["weight"].get<double>() >= 0.0);
    }
  }
  const SamplerConfig& sc = m.cfg.sampler;
  CHECK(refs == sc.n_queries);
  CHECK(samples == sc.n_layers * sc.n_heads * sc.n_queries * sc.n_points);
  std::remove(path.c_str());
}
