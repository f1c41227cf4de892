#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dsr/tensor.hpp"

namespace dsr {

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-4;
  // relative error uses max(|analytic|, |numeric|, abs_floor) in the denominator
  // so near-zero gradients are compared on an absolute scale
  double abs_floor = 1e-3;
  // check at most this many coordinates per leaf (all if <= 0), chosen at random
  int max_coords = -1;
  std::uint64_t seed = 1234;
};

struct GradCheckResult {
  bool ok = true;
  double max_rel_err = 0.0;
  int coords_checked = 0;
  std::string worst;  // description of the worst coordinate
};

// Central-difference verification of reverse-mode gradients. `forward` must be
// a deterministic function of `leaves` returning a scalar; it is re-evaluated
// with perturbed leaf entries, so it must rebuild its graph on each call.
GradCheckResult finite_diff_check(const std::function<Tensor()>& forward,
                                  const std::vector<std::pair<std::string, Tensor>>& leaves,
                                  const GradCheckOptions& opt = {});

}  // namespace dsr
