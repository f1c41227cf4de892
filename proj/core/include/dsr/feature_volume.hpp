#pragma once

#include <array>
#include <vector>

#include "dsr/tensor.hpp"

namespace dsr {

// A video feature grid, stored channel-major as [d, t, h, w]. Sampling
// coordinates are normalized to the unit cube with align-corners semantics:
// coordinate 0 maps to grid index 0 and coordinate 1 to index n-1 on each
// axis, so a size-1 axis is the constant function of its coordinate.
// Coordinates arrive ordered (t, y, x). Out-of-range coordinates are clamped
// to [0,1]; a clamped axis contributes zero gradient to the coordinate.
struct FeatureVolume {
  Tensor x;

  FeatureVolume() = default;
  explicit FeatureVolume(Tensor data);

  int d() const { return x.dim(0); }
  int t() const { return x.dim(1); }
  int h() const { return x.dim(2); }
  int w() const { return x.dim(3); }
};

// Trilinear interpolation of the d channels at one normalized point [3].
// Differentiable in both the volume and the point. Exactly reproduces grid
// values when a coordinate equals i/(n-1) bit-for-bit.
Tensor trilinear_sample(const FeatureVolume& vol, const Tensor& point);

// Batched form: points [n, 3] -> samples [n, d].
Tensor trilinear_sample_many(const FeatureVolume& vol, const Tensor& points);

// Per-frame spatial average: [d,t,h,w] -> [t, d]. The global context path.
Tensor spatial_mean(const FeatureVolume& vol);

// Raw grid features for the listed frames, one row per (frame, y, x) in
// row-major spatial order: -> [len(frames)*h*w, d]. With temporal_mean the
// listed frames are averaged per spatial cell instead: -> [h*w, d].
Tensor volume_tokens(const FeatureVolume& vol, const std::vector<int>& frames,
                     bool temporal_mean = false);

// normalized (t, y, x) centers for the tokens volume_tokens produces,
// matching the align-corners convention (size-1 axes map to 0.5)
std::vector<std::array<double, 3>> volume_token_locations(const FeatureVolume& vol,
                                                          const std::vector<int>& frames,
                                                          bool temporal_mean = false);

}  // namespace dsr
