#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "dsr/dependency.hpp"
#include "dsr/grad_check.hpp"
#include "dsr/params.hpp"
#include "dsr/rng.hpp"

#include "oracles.hpp"

using namespace dsr;

namespace {

DependencyParse sample_parse() {
  // "which shape appeared first" with "appeared" as root
  DependencyParse p;
  p.words = {"which", "shape", "appeared", "first"};
  p.governor = {1, 2, -1, 2};
  p.subword_counts = {1, 1, 2, 1};
  return p;
}

bool row_one_hot(const Tensor& a, int row, int hot) {
  int n = a.dim(1);
  for (int j = 0; j < n; ++j) {
    double want = j == hot ? 1.0 : 0.0;
    if (a.data()[static_cast<size_t>(row) * n + j] != want) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("parse text format") {
  std::string text =
      "# a question parse\n"
      "which 1 1\n"
      "shape 2 1   # trailing comment\n"
      "\n"
      "appeared -1 2\n"
      "first 2 1\n";
  DependencyParse p = parse_dependency_lines(text);
  CHECK(p.words == std::vector<std::string>({"which", "shape", "appeared", "first"}));
  CHECK(p.governor == std::vector<int>({1, 2, -1, 2}));
  CHECK(p.subword_counts == std::vector<int>({1, 1, 2, 1}));
  CHECK(p.n_subwords() == 5);

  CHECK_THROWS_WITH_AS((void)parse_dependency_lines("word -1\n"),
                       doctest::Contains("line 1"), Error);
  CHECK_THROWS_WITH_AS((void)parse_dependency_lines(""), doctest::Contains("empty"), Error);
  // two roots
  CHECK_THROWS_WITH_AS((void)parse_dependency_lines("a -1 1\nb -1 1\n"),
                       doctest::Contains("one root"), Error);
  // no root
  CHECK_THROWS_WITH_AS((void)parse_dependency_lines("a 1 1\nb 0 1\n"),
                       doctest::Contains("one root"), Error);
  // cycle off the root
  CHECK_THROWS_WITH_AS((void)parse_dependency_lines("a -1 1\nb 2 1\nc 1 1\n"),
                       doctest::Contains("cycle"), Error);
  // out-of-range governor, self-loop, bad subword count
  CHECK_THROWS_AS((void)parse_dependency_lines("a -1 1\nb 7 1\n"), Error);
  CHECK_THROWS_AS((void)parse_dependency_lines("a -1 1\nb 1 1\n"), Error);
  CHECK_THROWS_AS((void)parse_dependency_lines("a -1 0\nb 0 1\n"), Error);
}

TEST_CASE("word adjacency is one hot with a root self loop") {
  Tensor a = build_adjacency(sample_parse());
  REQUIRE(a.shape() == Shape({4, 4}));
  CHECK(row_one_hot(a, 0, 1));
  CHECK(row_one_hot(a, 1, 2));
  CHECK(row_one_hot(a, 2, 2));  // root points at itself
  CHECK(row_one_hot(a, 3, 2));
  CHECK_FALSE(a.requires_grad());
}

TEST_CASE("subword adjacency follows the segmentation rules") {
  // subword layout: which=0 shape=1 appeared=2,3 first=4, then 2 specials
  Tensor a = reindex_for_subwords(sample_parse(), 2);
  REQUIRE(a.shape() == Shape({7, 7}));
  CHECK(row_one_hot(a, 0, 1));  // "which" -> rightmost of "shape"
  CHECK(row_one_hot(a, 1, 3));  // "shape" -> rightmost of "appeared"
  CHECK(row_one_hot(a, 2, 3));  // inner subword -> right neighbor
  CHECK(row_one_hot(a, 3, 3));  // root word's rightmost -> itself
  CHECK(row_one_hot(a, 4, 3));  // "first" -> rightmost of "appeared"
  CHECK(row_one_hot(a, 5, 5));  // specials sit on the diagonal
  CHECK(row_one_hot(a, 6, 6));
  CHECK_THROWS_AS((void)reindex_for_subwords(sample_parse(), -1), Error);
}

TEST_CASE("subword adjacency properties over random segmentations") {
  Rng rng(314);
  for (int trial = 0; trial < 60; ++trial) {
    oracle::RandomParse rp = oracle::random_parse(rng);
    DependencyParse p;
    int nw = static_cast<int>(rp.governor.size());
    for (int i = 0; i < nw; ++i) p.words.push_back("w" + std::to_string(i));
    p.governor = rp.governor;
    p.subword_counts = rp.subword_counts;
    int specials = static_cast<int>(rng.uniform_int(0, 2));
    Tensor a = reindex_for_subwords(p, specials);

    std::vector<int> first(nw), last(nw);
    int pos = 0;
    for (int w = 0; w < nw; ++w) {
      first[w] = pos;
      pos += p.subword_counts[w];
      last[w] = pos - 1;
    }
    REQUIRE(a.dim(0) == pos + specials);
    for (int w = 0; w < nw; ++w) {
      for (int s = first[w]; s < last[w]; ++s) CHECK(row_one_hot(a, s, s + 1));
      int target = p.governor[w] == -1 ? last[w] : last[p.governor[w]];
      CHECK(row_one_hot(a, last[w], target));
    }
    for (int s = pos; s < pos + specials; ++s) CHECK(row_one_hot(a, s, s));
  }
}

TEST_CASE("gold dependency head gathers the governor's value row") {
  ParamStore store;
  Rng rng(9);
  DepConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  DependencyEncoder enc = DependencyEncoder::make(store, "dep", 8, cfg, rng);
  CHECK(cfg.gold);  // hard adjacency is the default mode

  DependencyParse p = sample_parse();
  Tensor a = reindex_for_subwords(p);
  Tensor o = Tensor::randn({5, 8}, rng);
  Tensor got = enc.dependency_head(o, a);
  Tensor values = enc.layers[0].dep.wv.forward(o);
  int governor_of[5] = {1, 3, 3, 3, 3};
  for (int i = 0; i < 5; ++i)
    for (int c = 0; c < 4; ++c)
      CHECK(got.at({i, c}) == values.at({governor_of[i], c}));  // exact gather

  // a soft square matrix with a bad row sum is rejected
  Tensor bad = Tensor::full({5, 5}, 0.3);
  CHECK_THROWS_AS((void)enc.dependency_head(o, bad), Error);
  CHECK_THROWS_AS((void)enc.dependency_head(Tensor::randn({4, 8}, rng), a), Error);
}

TEST_CASE("gold mode keeps the bi-affine trio out of the graph") {
  ParamStore store;
  Rng rng(10);
  DepConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  DependencyEncoder enc = DependencyEncoder::make(store, "dep", 8, cfg, rng);
  // the trio only exists in layer 0
  CHECK(store.contains("dep.layer0.dep.u"));
  CHECK_FALSE(store.contains("dep.layer1.dep.u"));
  CHECK_FALSE(store.contains("dep.layer1.dep.q.w"));
  CHECK(store.contains("dep.layer1.h1.q.w"));  // layer 1 keeps all heads standard

  Tensor a = reindex_for_subwords(sample_parse());
  Tensor o = Tensor::randn({5, 8}, rng, 1.0, true);
  Tensor attn;
  Tensor out = enc.forward(o, a, &attn);
  REQUIRE(out.shape() == Shape({5, 8}));
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(attn.at({i, j}) == a.at({i, j}));

  store.zero_grad();
  backward(sum_all(out));
  for (const char* name : {"dep.layer0.dep.q.w", "dep.layer0.dep.q.b", "dep.layer0.dep.k.w",
                           "dep.layer0.dep.k.b", "dep.layer0.dep.u"}) {
    const Parameter& prm = store.find(name);
    if (!prm.value.has_grad()) continue;
    for (double g : prm.value.grad()) CHECK(g == 0.0);
  }
  const Parameter& wv = store.find("dep.layer0.dep.v.w");
  REQUIRE(wv.value.has_grad());
  double mag = 0.0;
  for (double g : wv.value.grad()) mag += std::fabs(g);
  CHECK(mag > 0.0);
}

TEST_CASE("bi-affine scores match a straight-line reimplementation") {
  ParamStore store;
  Rng rng(11);
  DepConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.gold = false;
  DependencyEncoder enc = DependencyEncoder::make(store, "dep", 8, cfg, rng);
  int n = 5, d = 8, dh = 4;
  Tensor o = Tensor::randn({n, d}, rng);
  Tensor got = enc.biaffine_scores(o);

  auto buf = [&](const char* nm) {
    const Tensor& t = store.find(nm).value;
    return std::vector<double>(t.data().begin(), t.data().end());
  };
  std::vector<double> want = oracle::biaffine(
      std::vector<double>(o.data().begin(), o.data().end()), n, d,
      buf("dep.layer0.dep.q.w"), buf("dep.layer0.dep.q.b"), buf("dep.layer0.dep.k.w"),
      buf("dep.layer0.dep.k.b"), buf("dep.layer0.dep.u"), dh);
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      CHECK(got.at({i, j}) ==
            doctest::Approx(want[static_cast<size_t>(i) * n + j]).epsilon(1e-12));
      row += got.at({i, j});
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS((void)enc.biaffine_scores(Tensor::randn({n, d + 1}, rng)), Error);
}

TEST_CASE("learned mode gradients reach the trio") {
  ParamStore store;
  Rng rng(12);
  DepConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.gold = false;
  DependencyEncoder enc = DependencyEncoder::make(store, "dep", 8, cfg, rng);
  Tensor a = reindex_for_subwords(sample_parse());
  Tensor o = Tensor::randn({5, 8}, rng, 1.0, true);
  std::vector<std::pair<std::string, Tensor>> leaves = {
      {"o", o},
      {"u", store.find("dep.layer0.dep.u").value},
      {"wq", store.find("dep.layer0.dep.q.w").value},
      {"wk", store.find("dep.layer0.dep.k.w").value},
      {"wv", store.find("dep.layer0.dep.v.w").value}};
  GradCheckOptions opt;
  opt.rel_tol = 1e-5;
  opt.max_coords = 8;
  GradCheckResult r =
      finite_diff_check([&]() { return sum_all(enc.forward(o, a)); }, leaves, opt);
  INFO(r.worst);
  CHECK(r.ok);
}

TEST_CASE("config validation") {
  DepConfig cfg;
  CHECK(cfg.gold);
  CHECK_NOTHROW(cfg.validate(48));
  CHECK_THROWS_AS(cfg.validate(50), Error);  // not divisible by 12 heads
  cfg.n_layers = 0;
  CHECK_THROWS_AS(cfg.validate(48), Error);
}
