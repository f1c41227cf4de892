#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsr/feature_volume.hpp"
#include "dsr/grad_check.hpp"
#include "dsr/rng.hpp"

#include "oracles.hpp"

using namespace dsr;

namespace {

FeatureVolume random_volume(Shape s, Rng& rng, bool grad = false) {
  return FeatureVolume(Tensor::randn(s, rng, 1.0, grad));
}

}  // namespace

TEST_CASE("trilinear matches the hat-basis oracle on many shapes") {
  std::vector<Shape> shapes = {{3, 4, 3, 2}, {2, 1, 5, 2}, {1, 3, 1, 4}, {4, 2, 2, 2}, {2, 6, 1, 1}};
  Rng rng(21);
  for (const Shape& s : shapes) {
    FeatureVolume vol = random_volume(s, rng);
    for (int i = 0; i < 1000; ++i) {
      double tu = rng.uniform(-0.2, 1.2);  // includes out-of-range, exercising the clamp
      double yu = rng.uniform(-0.2, 1.2);
      double xu = rng.uniform(-0.2, 1.2);
      Tensor p = Tensor::from_data({3}, {tu, yu, xu});
      Tensor got = trilinear_sample(vol, p);
      for (int c = 0; c < s[0]; ++c) {
        double want = oracle::trilinear(vol.x.data(), s[0], s[1], s[2], s[3], c, tu, yu, xu);
        CHECK(std::abs(got.at({c}) - want) <= 1e-12);
      }
    }
  }
}

TEST_CASE("grid points reproduce stored values exactly") {
  Rng rng(22);
  FeatureVolume vol = random_volume({2, 5, 4, 3}, rng);
  for (int t = 0; t < 5; ++t)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 3; ++x) {
        Tensor p = Tensor::from_data({3}, {t / 4.0, y / 3.0, x / 2.0});
        Tensor got = trilinear_sample(vol, p);
        for (int c = 0; c < 2; ++c) CHECK(got.at({c}) == vol.x.at({c, t, y, x}));
      }
}

TEST_CASE("interpolation is linear in the volume") {
  Rng rng(23);
  FeatureVolume a = random_volume({3, 4, 3, 2}, rng);
  FeatureVolume b = random_volume({3, 4, 3, 2}, rng);
  FeatureVolume mix(add(scale(a.x, 0.3), scale(b.x, -1.7)));
  for (int i = 0; i < 200; ++i) {
    Tensor p = Tensor::from_data({3}, {rng.uniform(), rng.uniform(), rng.uniform()});
    Tensor sm = trilinear_sample(mix, p);
    Tensor sa = trilinear_sample(a, p);
    Tensor sb = trilinear_sample(b, p);
    for (int c = 0; c < 3; ++c)
      CHECK(std::abs(sm.at({c}) - (0.3 * sa.at({c}) - 1.7 * sb.at({c}))) <= 1e-10);
  }
}

TEST_CASE("out-of-range coordinates clamp to the box") {
  Rng rng(24);
  FeatureVolume vol = random_volume({2, 4, 3, 3}, rng);
  Tensor out = trilinear_sample(vol, Tensor::from_data({3}, {-0.5, 2.0, 0.3}));
  Tensor at_edge = trilinear_sample(vol, Tensor::from_data({3}, {0.0, 1.0, 0.3}));
  for (int c = 0; c < 2; ++c) CHECK(out.at({c}) == at_edge.at({c}));
}

TEST_CASE("size-1 axes are constant in their coordinate") {
  Rng rng(25);
  FeatureVolume vol = random_volume({2, 1, 3, 1}, rng);
  Tensor s1 = trilinear_sample(vol, Tensor::from_data({3}, {0.1, 0.5, 0.9}));
  Tensor s2 = trilinear_sample(vol, Tensor::from_data({3}, {0.8, 0.5, 0.2}));
  for (int c = 0; c < 2; ++c) CHECK(s1.at({c}) == s2.at({c}));
}

TEST_CASE("batched sampling equals one-point sampling") {
  Rng rng(26);
  FeatureVolume vol = random_volume({3, 4, 3, 2}, rng);
  std::vector<double> pd;
  for (int i = 0; i < 7 * 3; ++i) pd.push_back(rng.uniform());
  Tensor pts = Tensor::from_data({7, 3}, std::move(pd));
  Tensor many = trilinear_sample_many(vol, pts);
  for (int i = 0; i < 7; ++i) {
    Tensor one = trilinear_sample(vol, row(pts, i));
    for (int c = 0; c < 3; ++c) CHECK(many.at({i, c}) == one.at({c}));
  }
  CHECK_THROWS_AS((void)trilinear_sample_many(vol, Tensor::zeros({7, 2})), Error);
  CHECK_THROWS_AS((void)trilinear_sample(vol, Tensor::zeros({4})), Error);
}

TEST_CASE("gradients with respect to volume and points") {
  Rng rng(27);
  FeatureVolume vol = random_volume({2, 4, 3, 3}, rng, true);
  std::vector<double> pd;
  for (int i = 0; i < 5 * 3; ++i) pd.push_back(0.08 + 0.84 * rng.uniform());
  Tensor pts = Tensor::from_data({5, 3}, std::move(pd), true);
  Tensor m = Tensor::randn({5, 2}, rng);
  GradCheckOptions opt;
  opt.rel_tol = 1e-4;
  GradCheckResult r = finite_diff_check(
      [&]() { return sum_all(mul(trilinear_sample_many(vol, pts), m)); },
      {{"volume", vol.x}, {"points", pts}}, opt);
  INFO(r.worst);
  CHECK(r.ok);
}

TEST_CASE("clamped coordinates get zero gradient on that axis") {
  Rng rng(28);
  FeatureVolume vol = random_volume({2, 4, 3, 3}, rng);
  Tensor p = Tensor::from_data({3}, {-0.4, 0.5, 1.3}, true);
  backward(sumsq(trilinear_sample(vol, p)));
  CHECK(p.grad()[0] == 0.0);
  CHECK(p.grad()[2] == 0.0);
}

TEST_CASE("spatial mean per frame") {
  Rng rng(29);
  FeatureVolume vol = random_volume({3, 2, 2, 3}, rng);
  Tensor sm = spatial_mean(vol);
  CHECK(sm.dim(0) == 2);
  CHECK(sm.dim(1) == 3);
  for (int t = 0; t < 2; ++t)
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x) acc += vol.x.at({c, t, y, x});
      CHECK(sm.at({t, c}) == doctest::Approx(acc / 6.0).epsilon(1e-14));
    }
}

TEST_CASE("volume tokens and their locations") {
  Rng rng(30);
  FeatureVolume vol = random_volume({2, 4, 2, 3}, rng);
  Tensor tok = volume_tokens(vol, {1, 3});
  CHECK(tok.dim(0) == 2 * 2 * 3);
  CHECK(tok.dim(1) == 2);
  // row order is (frame, y, x) row-major
  CHECK(tok.at({0, 0}) == vol.x.at({0, 1, 0, 0}));
  CHECK(tok.at({5, 1}) == vol.x.at({1, 1, 1, 2}));
  CHECK(tok.at({6, 0}) == vol.x.at({0, 3, 0, 0}));

  auto locs = volume_token_locations(vol, {1, 3});
  CHECK(locs.size() == 12);
  CHECK(locs[0][0] == doctest::Approx(1.0 / 3.0));
  CHECK(locs[0][1] == 0.0);
  CHECK(locs[6][0] == doctest::Approx(1.0));
  CHECK(locs[5][2] == doctest::Approx(1.0));

  Tensor pooled = volume_tokens(vol, {1, 3}, true);
  CHECK(pooled.dim(0) == 2 * 3);
  CHECK(pooled.at({0, 0}) ==
        doctest::Approx(0.5 * (vol.x.at({0, 1, 0, 0}) + vol.x.at({0, 3, 0, 0}))).epsilon(1e-14));
  auto plocs = volume_token_locations(vol, {1, 3}, true);
  CHECK(plocs.size() == 6);
  CHECK(plocs[0][0] == doctest::Approx((1.0 / 3.0 + 1.0) / 2.0));

  FeatureVolume tiny = random_volume({2, 1, 1, 2}, rng);
  auto tl = volume_token_locations(tiny, {0});
  CHECK(tl[0][0] == 0.5);  // size-1 axis sits at the box center
  CHECK(tl[0][1] == 0.5);

  CHECK_THROWS_AS((void)volume_tokens(vol, {4}), Error);
  CHECK_THROWS_AS((void)volume_tokens(vol, {}), Error);
}

TEST_CASE("constructor validates the shape") {
  CHECK_THROWS_AS((void)FeatureVolume(Tensor::zeros({2, 3})), Error);
}
