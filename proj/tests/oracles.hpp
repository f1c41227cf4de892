#pragma once

// Test-side reference implementations, deliberately structured differently
// from the library code paths they validate, plus frozen reference constants.

#include <cmath>
#include <cstdint>
#include <vector>

#include "dsr/rng.hpp"

namespace oracle {

// cross-entropy of logits [10, -10] against label 0, i.e. log1p(exp(-20))
inline constexpr double kCe10m10 = 2.061153620314381e-09;
// cross-entropy of logits [0, ln 2] against label 1, i.e. -log(2/3)
inline constexpr double kCeLn2 = 0.40546510810816444;
// the inclusive-denominator contrastive per-anchor value for aligned pairs
// with orthogonal cross terms at tau = 0.1: log1p(exp(-10))
inline constexpr double kInclusivePerAnchor = 4.539889921686465e-05;
// cost-model anchors at H = W = 7, L_t = 100, N_q = 25, N_c = T/2
inline constexpr double kBudget = 9241600.0;  // (60*49 + 100)^2
inline constexpr int kSparseMaxFrames = 832;
inline constexpr int kDsrMaxFrames = 2915;

// Hat-basis interpolation: sums the contribution of every grid node instead
// of selecting a corner cell. Coordinates are clamped to [0,1]; a size-1 axis
// is constant. `data` is channel-major [d, t, h, w].
inline double hat_weight(double u, int n, int i) {
  if (n == 1) return i == 0 ? 1.0 : 0.0;
  if (u < 0.0) u = 0.0;
  if (u > 1.0) u = 1.0;
  double dist = std::abs(u * (n - 1) - i);
  return dist >= 1.0 ? 0.0 : 1.0 - dist;
}

inline double trilinear(const std::vector<double>& data, int d, int t, int h, int w, int c,
                        double tu, double yu, double xu) {
  double acc = 0.0;
  for (int it = 0; it < t; ++it) {
    double wt = hat_weight(tu, t, it);
    if (wt == 0.0) continue;
    for (int iy = 0; iy < h; ++iy) {
      double wy = hat_weight(yu, h, iy);
      if (wy == 0.0) continue;
      for (int ix = 0; ix < w; ++ix) {
        double wx = hat_weight(xu, w, ix);
        if (wx == 0.0) continue;
        acc += wt * wy * wx *
               data[((static_cast<size_t>(c) * t + it) * h + iy) * w + ix];
      }
    }
  }
  return acc;
}

// y = x W + b over raw buffers; W is [in, out] row-major
inline std::vector<double> linear(const std::vector<double>& x, int in,
                                  const std::vector<double>& w, const std::vector<double>& b,
                                  int out) {
  std::vector<double> y(b.begin(), b.end());
  for (int j = 0; j < out; ++j)
    for (int i = 0; i < in; ++i) y[j] += x[i] * w[static_cast<size_t>(i) * out + j];
  return y;
}

inline std::vector<double> softmax_rows(std::vector<double> scores, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    double* p = scores.data() + static_cast<size_t>(r) * cols;
    double mx = p[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, p[c]);
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      p[c] = std::exp(p[c] - mx);
      sum += p[c];
    }
    for (int c = 0; c < cols; ++c) p[c] /= sum;
  }
  return scores;
}

// softmax over keys of (O Wq) U (O Wk)^T computed with plain triple loops;
// all matrices row-major raw buffers
inline std::vector<double> biaffine(const std::vector<double>& o, int n, int d,
                                    const std::vector<double>& wq, const std::vector<double>& bq,
                                    const std::vector<double>& wk, const std::vector<double>& bk,
                                    const std::vector<double>& u, int dh) {
  std::vector<double> q(static_cast<size_t>(n) * dh), k(static_cast<size_t>(n) * dh);
  for (int i = 0; i < n; ++i) {
    std::vector<double> xi(o.begin() + static_cast<size_t>(i) * d,
                           o.begin() + static_cast<size_t>(i + 1) * d);
    std::vector<double> qi = linear(xi, d, wq, bq, dh);
    std::vector<double> ki = linear(xi, d, wk, bk, dh);
    for (int c = 0; c < dh; ++c) {
      q[static_cast<size_t>(i) * dh + c] = qi[c];
      k[static_cast<size_t>(i) * dh + c] = ki[c];
    }
  }
  std::vector<double> scores(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int a = 0; a < dh; ++a)
        for (int b = 0; b < dh; ++b)
          s += q[static_cast<size_t>(i) * dh + a] * u[static_cast<size_t>(a) * dh + b] *
               k[static_cast<size_t>(j) * dh + b];
      scores[static_cast<size_t>(i) * n + j] = s;
    }
  return softmax_rows(std::move(scores), n, n);
}

// random projective word tree: governor[i] < i for i >= 1, word 0 is the root
struct RandomParse {
  std::vector<int> governor;
  std::vector<int> subword_counts;
};

inline RandomParse random_parse(dsr::Rng& rng, int max_words = 8, int max_subwords = 3) {
  int n = rng.uniform_int(2, max_words);
  RandomParse p;
  p.governor.push_back(-1);
  p.subword_counts.push_back(rng.uniform_int(1, max_subwords));
  for (int i = 1; i < n; ++i) {
    p.governor.push_back(rng.uniform_int(0, i - 1));
    p.subword_counts.push_back(rng.uniform_int(1, max_subwords));
  }
  return p;
}

}  // namespace oracle
