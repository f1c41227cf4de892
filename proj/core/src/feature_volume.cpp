#include "dsr/feature_volume.hpp"

#include <cmath>

#include "detail.hpp"

namespace dsr {

FeatureVolume::FeatureVolume(Tensor data) : x(std::move(data)) {
  if (x.ndim() != 4) fail("FeatureVolume: expected [d,t,h,w], got " + shape_str(x.shape()));
  for (int i = 0; i < 4; ++i)
    if (x.dim(i) < 1) fail("FeatureVolume: degenerate shape " + shape_str(x.shape()));
}

namespace {

struct AxisSample {
  int i0 = 0, i1 = 0;   // bracketing grid indices
  double frac = 0.0;    // weight of i1
  double dfactor = 0.0; // d(grid coord)/d(normalized coord); 0 when clamped or size 1
};

AxisSample resolve_axis(double u_raw, int n, const char* what) {
  if (!std::isfinite(u_raw)) fail(std::string(what) + ": non-finite coordinate");
  AxisSample ax;
  double u = std::min(1.0, std::max(0.0, u_raw));
  bool clamped = u != u_raw;
  if (n == 1) return ax;  // constant axis: index 0, no dependence on u
  double scaled = u * (n - 1);
  int i0 = static_cast<int>(std::floor(scaled));
  if (i0 > n - 2) i0 = n - 2;
  if (i0 < 0) i0 = 0;
  double frac = scaled - i0;
  // snap exact grid coordinates so sampling at i/(n-1) returns the stored
  // value bit-for-bit even when u*(n-1) does not round-trip
  if (u == static_cast<double>(i0) / (n - 1)) {
    frac = 0.0;
  } else if (u == static_cast<double>(i0 + 1) / (n - 1)) {
    frac = 1.0;
  }
  ax.i0 = i0;
  ax.i1 = i0 + 1;
  ax.frac = frac;
  ax.dfactor = clamped ? 0.0 : static_cast<double>(n - 1);
  return ax;
}

}  // namespace

Tensor trilinear_sample_many(const FeatureVolume& vol, const Tensor& points) {
  if (points.ndim() != 2 || points.dim(1) != 3)
    fail("trilinear_sample_many: expected points [n,3], got " + shape_str(points.shape()));
  const Tensor& X = vol.x;
  int d = vol.d(), t = vol.t(), h = vol.h(), w = vol.w();
  int n = points.dim(0);
  std::vector<AxisSample> axes(static_cast<size_t>(n) * 3);
  const double* P = points.data().data();
  for (int i = 0; i < n; ++i) {
    axes[i * 3 + 0] = resolve_axis(P[i * 3 + 0], t, "trilinear_sample");
    axes[i * 3 + 1] = resolve_axis(P[i * 3 + 1], h, "trilinear_sample");
    axes[i * 3 + 2] = resolve_axis(P[i * 3 + 2], w, "trilinear_sample");
  }
  auto vol_index = [t, h, w](int ch, int ct, int cy, int cx) {
    return ((static_cast<size_t>(ch) * t + ct) * h + cy) * w + cx;
  };
  std::vector<double> out(static_cast<size_t>(n) * d, 0.0);
  const double* xd = X.data().data();
  for (int i = 0; i < n; ++i) {
    const AxisSample &at = axes[i * 3], &ay = axes[i * 3 + 1], &ax = axes[i * 3 + 2];
    double* orow = out.data() + static_cast<size_t>(i) * d;
    for (int bt = 0; bt < 2; ++bt) {
      double wt = bt ? at.frac : 1.0 - at.frac;
      if (wt == 0.0) continue;
      int ct = bt ? at.i1 : at.i0;
      for (int by = 0; by < 2; ++by) {
        double wy = by ? ay.frac : 1.0 - ay.frac;
        if (wy == 0.0) continue;
        int cy = by ? ay.i1 : ay.i0;
        for (int bx = 0; bx < 2; ++bx) {
          double wx = bx ? ax.frac : 1.0 - ax.frac;
          if (wx == 0.0) continue;
          int cx = bx ? ax.i1 : ax.i0;
          double wgt = wt * wy * wx;
          for (int ch = 0; ch < d; ++ch) orow[ch] += wgt * xd[vol_index(ch, ct, cy, cx)];
        }
      }
    }
  }
  Tensor xt = X;
  return detail_make_result(
      {n, d}, std::move(out), "trilinear_sample", {xt, points},
      [xt, points, axes, n, d, t, h, w, vol_index](const TensorImpl& o) {
        const double* G = o.grad.data();
        const double* xd = xt.data().data();
        bool need_x = xt.requires_grad();
        bool need_p = points.requires_grad();
        if (need_x) detail_ensure_grad(xt.impl());
        if (need_p) detail_ensure_grad(points.impl());
        for (int i = 0; i < n; ++i) {
          const AxisSample &at = axes[i * 3], &ay = axes[i * 3 + 1], &ax = axes[i * 3 + 2];
          const double* grow = G + static_cast<size_t>(i) * d;
          double dfrac[3] = {0.0, 0.0, 0.0};
          for (int bt = 0; bt < 2; ++bt) {
            double wt = bt ? at.frac : 1.0 - at.frac;
            int ct = bt ? at.i1 : at.i0;
            double st = bt ? 1.0 : -1.0;
            for (int by = 0; by < 2; ++by) {
              double wy = by ? ay.frac : 1.0 - ay.frac;
              int cy = by ? ay.i1 : ay.i0;
              double sy = by ? 1.0 : -1.0;
              for (int bx = 0; bx < 2; ++bx) {
                double wx = bx ? ax.frac : 1.0 - ax.frac;
                int cx = bx ? ax.i1 : ax.i0;
                double sx = bx ? 1.0 : -1.0;
                double wgt = wt * wy * wx;
                double gx = 0.0;  // sum_ch g[ch] * X[ch, corner]
                if (need_p || (need_x && wgt != 0.0)) {
                  for (int ch = 0; ch < d; ++ch) {
                    size_t idx = vol_index(ch, ct, cy, cx);
                    gx += grow[ch] * xd[idx];
                    if (need_x && wgt != 0.0) xt.impl()->grad[idx] += wgt * grow[ch];
                  }
                }
                if (need_p) {
                  dfrac[0] += st * wy * wx * gx;
                  dfrac[1] += wt * sy * wx * gx;
                  dfrac[2] += wt * wy * sx * gx;
                }
              }
            }
          }
          if (need_p) {
            points.impl()->grad[i * 3 + 0] += dfrac[0] * at.dfactor;
            points.impl()->grad[i * 3 + 1] += dfrac[1] * ay.dfactor;
            points.impl()->grad[i * 3 + 2] += dfrac[2] * ax.dfactor;
          }
        }
      });
}

Tensor trilinear_sample(const FeatureVolume& vol, const Tensor& point) {
  if (point.ndim() != 1 || point.dim(0) != 3)
    fail("trilinear_sample: expected point [3], got " + shape_str(point.shape()));
  return row(trilinear_sample_many(vol, reshape(point, {1, 3})), 0);
}

Tensor spatial_mean(const FeatureVolume& vol) {
  const Tensor& X = vol.x;
  int d = vol.d(), t = vol.t(), h = vol.h(), w = vol.w();
  int hw = h * w;
  std::vector<double> out(static_cast<size_t>(t) * d, 0.0);
  const double* xd = X.data().data();
  for (int ch = 0; ch < d; ++ch)
    for (int f = 0; f < t; ++f) {
      const double* frame = xd + (static_cast<size_t>(ch) * t + f) * hw;
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) acc += frame[i];
      out[static_cast<size_t>(f) * d + ch] = acc / hw;
    }
  Tensor xt = X;
  return detail_make_result({t, d}, std::move(out), "spatial_mean", {xt},
                            [xt, d, t, hw](const TensorImpl& o) {
                              if (!xt.requires_grad()) return;
                              detail_ensure_grad(xt.impl());
                              for (int ch = 0; ch < d; ++ch)
                                for (int f = 0; f < t; ++f) {
                                  double g = o.grad[static_cast<size_t>(f) * d + ch] / hw;
                                  double* frame =
                                      xt.impl()->grad.data() + (static_cast<size_t>(ch) * t + f) * hw;
                                  for (int i = 0; i < hw; ++i) frame[i] += g;
                                }
                            });
}

Tensor volume_tokens(const FeatureVolume& vol, const std::vector<int>& frames,
                     bool temporal_mean) {
  if (frames.empty()) fail("volume_tokens: no frames listed");
  for (int f : frames)
    if (f < 0 || f >= vol.t())
      fail("volume_tokens: frame " + std::to_string(f) + " out of range for t=" +
           std::to_string(vol.t()));
  const Tensor& X = vol.x;
  int d = vol.d(), t = vol.t(), h = vol.h(), w = vol.w();
  int hw = h * w;
  int nf = static_cast<int>(frames.size());
  int rows = temporal_mean ? hw : nf * hw;
  std::vector<double> out(static_cast<size_t>(rows) * d, 0.0);
  const double* xd = X.data().data();
  for (int fi = 0; fi < nf; ++fi) {
    int f = frames[fi];
    for (int s = 0; s < hw; ++s) {
      int r = temporal_mean ? s : fi * hw + s;
      for (int ch = 0; ch < d; ++ch) {
        double v = xd[(static_cast<size_t>(ch) * t + f) * hw + s];
        out[static_cast<size_t>(r) * d + ch] += temporal_mean ? v / nf : v;
      }
    }
  }
  Tensor xt = X;
  std::vector<int> fr = frames;
  return detail_make_result(
      {rows, d}, std::move(out), "volume_tokens", {xt},
      [xt, fr, temporal_mean, d, t, hw](const TensorImpl& o) {
        if (!xt.requires_grad()) return;
        detail_ensure_grad(xt.impl());
        int nf = static_cast<int>(fr.size());
        for (int fi = 0; fi < nf; ++fi) {
          int f = fr[fi];
          for (int s = 0; s < hw; ++s) {
            int r = temporal_mean ? s : fi * hw + s;
            for (int ch = 0; ch < d; ++ch) {
              double g = o.grad[static_cast<size_t>(r) * d + ch];
              xt.impl()->grad[(static_cast<size_t>(ch) * t + f) * hw + s] +=
                  temporal_mean ? g / nf : g;
            }
          }
        }
      });
}

std::vector<std::array<double, 3>> volume_token_locations(const FeatureVolume& vol,
                                                          const std::vector<int>& frames,
                                                          bool temporal_mean) {
  int t = vol.t(), h = vol.h(), w = vol.w();
  auto norm = [](int i, int n) { return n == 1 ? 0.5 : static_cast<double>(i) / (n - 1); };
  std::vector<std::array<double, 3>> locs;
  if (temporal_mean) {
    double ft = 0.0;
    for (int f : frames) ft += norm(f, t);
    ft /= static_cast<double>(frames.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) locs.push_back({ft, norm(y, h), norm(x, w)});
  } else {
    for (int f : frames)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) locs.push_back({norm(f, t), norm(y, h), norm(x, w)});
  }
  return locs;
}

}  // namespace dsr
