#include "dsr/grad_check.hpp"

#include <cmath>

namespace dsr {

GradCheckResult finite_diff_check(const std::function<Tensor()>& forward,
                                  const std::vector<std::pair<std::string, Tensor>>& leaves,
                                  const GradCheckOptions& opt) {
  for (const auto& [name, t] : leaves) {
    if (!t.is_leaf()) fail("finite_diff_check: '" + name + "' is not a leaf tensor");
    if (!t.requires_grad()) fail("finite_diff_check: '" + name + "' does not require grad");
    Tensor handle = t;
    handle.zero_grad();
  }

  Tensor loss = forward();
  backward(loss);

  // copy analytic grads before perturbing anything
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : leaves)
    analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.data().size(), 0.0));

  GradCheckResult res;
  Rng rng(opt.seed);
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor t = leaves[li].second;
    std::int64_t n = t.numel();
    std::vector<std::int64_t> coords;
    if (opt.max_coords > 0 && n > opt.max_coords) {
      for (int k = 0; k < opt.max_coords; ++k)
        coords.push_back(rng.uniform_int(0, static_cast<int>(n) - 1));
    } else {
      for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
    }
    for (std::int64_t ci : coords) {
      double saved = t.mutable_data()[ci];
      double fp, fm;
      {
        NoGradGuard ng;
        t.mutable_data()[ci] = saved + opt.step;
        fp = forward().value();
        t.mutable_data()[ci] = saved - opt.step;
        fm = forward().value();
        t.mutable_data()[ci] = saved;
      }
      double numeric = (fp - fm) / (2.0 * opt.step);
      double a = analytic[li][ci];
      double denom = std::max({std::fabs(a), std::fabs(numeric), opt.abs_floor});
      double rel = std::fabs(a - numeric) / denom;
      ++res.coords_checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = leaves[li].first + "[" + std::to_string(ci) +
                    "]: analytic=" + std::to_string(a) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  res.ok = res.max_rel_err <= opt.rel_tol;
  return res;
}

}  // namespace dsr
