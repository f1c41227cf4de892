#include "dsr/regularizers.hpp"

#include <cmath>

#include "dsr/sampler.hpp"

namespace dsr {

RegKind reg_kind_from_string(const std::string& s) {
  if (s == "none") return RegKind::None;
  if (s == "so") return RegKind::SO;
  if (s == "mcr") return RegKind::MCR;
  if (s == "contrastive") return RegKind::Contrastive;
  fail("unknown regularizer kind '" + s + "' (expected none|so|mcr|contrastive)");
}

std::string reg_kind_to_string(RegKind k) {
  switch (k) {
    case RegKind::None: return "none";
    case RegKind::SO: return "so";
    case RegKind::MCR: return "mcr";
    case RegKind::Contrastive: return "contrastive";
  }
  fail("reg_kind_to_string: bad enum");
}

void RegConfig::validate() const {
  if (lambda < 0.0) fail("RegConfig: lambda must be >= 0");
  if (eps <= 0.0) fail("RegConfig: eps must be > 0");
  if (tau <= 0.0) fail("RegConfig: tau must be > 0");
}

static void check_token_set(const Tensor& v, const char* op) {
  if (v.ndim() != 2 || v.dim(0) < 1 || v.dim(1) < 1)
    fail(std::string(op) + ": expected token sets [L_v, d], got " + shape_str(v.shape()));
}

Tensor soft_orthogonality(const std::vector<Tensor>& v_batch, double lambda) {
  Tensor total = Tensor::scalar(0.0);
  for (const Tensor& v : v_batch) {
    check_token_set(v, "soft_orthogonality");
    Tensor gram = matmul(v, transpose(v));
    total = add(total, sumsq(sub_identity(gram)));
  }
  return scale(total, lambda);
}

Tensor mcr_regularizer(const std::vector<Tensor>& v_batch, double lambda, double eps) {
  if (eps <= 0.0) fail("mcr_regularizer: eps must be > 0");
  Tensor total = Tensor::scalar(0.0);
  for (const Tensor& v : v_batch) {
    check_token_set(v, "mcr_regularizer");
    int lv = v.dim(0), d = v.dim(1);
    double alpha = static_cast<double>(d) / (lv * eps * eps);
    Tensor gram = matmul(v, transpose(v));
    Tensor m = add(Tensor::identity(lv), scale(gram, alpha));
    total = add(total, logdet_spd(m));
  }
  return scale(total, -0.5 * lambda);
}

namespace {

// unit-normalize a pooled vector, failing on zero norm (cosine undefined)
Tensor normalize_or_fail(const Tensor& v, const char* what) {
  Tensor n = sqrt(sumsq(v));
  if (n.value() == 0.0) fail(std::string("contrastive_reg: zero-norm pooled ") + what);
  return div_sc(v, n);
}

}  // namespace

Tensor contrastive_reg(const std::vector<Tensor>& v_batch,
                       const std::vector<FeatureVolume>& x_batch, double lambda, double tau,
                       bool inclusive_denominator) {
  size_t n = v_batch.size();
  if (n < 2) fail("contrastive_reg: batch size must be >= 2, got " + std::to_string(n));
  if (x_batch.size() != n)
    fail("contrastive_reg: " + std::to_string(n) + " token sets vs " +
         std::to_string(x_batch.size()) + " volumes");
  if (tau <= 0.0) fail("contrastive_reg: tau must be > 0");
  std::vector<Tensor> vhat(n), xhat(n);
  for (size_t i = 0; i < n; ++i) {
    check_token_set(v_batch[i], "contrastive_reg");
    vhat[i] = normalize_or_fail(mean_rows(v_batch[i]), "token set");
    // pool the volume over all t,h,w positions
    xhat[i] = normalize_or_fail(mean_rows(spatial_mean(x_batch[i])), "volume");
  }
  Tensor total = Tensor::scalar(0.0);
  for (size_t i = 0; i < n; ++i) {
    Tensor pos = scale(dot(vhat[i], xhat[i]), 1.0 / tau);
    Tensor denom;
    for (size_t j = 0; j < n; ++j) {
      if (j == i && !inclusive_denominator) continue;
      Tensor e = exp(scale(dot(vhat[i], xhat[j]), 1.0 / tau));
      denom = denom.defined() ? add(denom, e) : e;
    }
    total = add(total, sub(log(denom), pos));
  }
  return scale(total, lambda);
}

Tensor diversity_regularizer(const RegConfig& cfg, const std::vector<Tensor>& v_batch,
                             const std::vector<FeatureVolume>& x_batch) {
  cfg.validate();
  if (cfg.kind == RegKind::None || v_batch.empty()) return Tensor::scalar(0.0);
  switch (cfg.kind) {
    case RegKind::SO: return soft_orthogonality(v_batch, cfg.lambda);
    case RegKind::MCR: return mcr_regularizer(v_batch, cfg.lambda, cfg.eps);
    case RegKind::Contrastive:
      return contrastive_reg(v_batch, x_batch, cfg.lambda, cfg.tau, cfg.contrastive_inclusive);
    default: fail("diversity_regularizer: bad kind");
  }
}

DiversityMetrics diversity_metrics(const SampledTokenSet& sampled) {
  if (!sampled.tokens.defined()) fail("diversity_metrics: no tokens");
  int lv = sampled.tokens.dim(0), d = sampled.tokens.dim(1);
  if (lv < 2) fail("diversity_metrics: need at least two tokens");
  const std::vector<double>& v = sampled.tokens.data();

  std::vector<double> unit(v.size());
  for (int i = 0; i < lv; ++i) {
    double norm = 0.0;
    for (int j = 0; j < d; ++j) norm += v[static_cast<size_t>(i) * d + j] * v[static_cast<size_t>(i) * d + j];
    norm = std::sqrt(norm);
    if (norm == 0.0) fail("diversity_metrics: zero-norm token " + std::to_string(i));
    for (int j = 0; j < d; ++j)
      unit[static_cast<size_t>(i) * d + j] = v[static_cast<size_t>(i) * d + j] / norm;
  }
  DiversityMetrics m;
  double acc = 0.0;
  for (int i = 0; i < lv; ++i)
    for (int j = i + 1; j < lv; ++j) {
      double dotv = 0.0;
      for (int c = 0; c < d; ++c)
        dotv += unit[static_cast<size_t>(i) * d + c] * unit[static_cast<size_t>(j) * d + c];
      acc += std::fabs(dotv);
    }
  m.mean_abs_offdiag_gram = acc / (lv * (lv - 1) / 2.0);

  if (sampled.locations.empty() || sampled.locations.back().empty())
    fail("diversity_metrics: no recorded sampling locations");
  const auto& last = sampled.locations.back();
  int heads = static_cast<int>(last.size());
  int k = last[0].dim(0) / lv;
  std::vector<std::array<double, 3>> mean_loc(lv, {0.0, 0.0, 0.0});
  for (int h = 0; h < heads; ++h) {
    const std::vector<double>& loc = last[h].data();
    for (int q = 0; q < lv; ++q)
      for (int p = 0; p < k; ++p)
        for (int a = 0; a < 3; ++a)
          mean_loc[q][a] += loc[(static_cast<size_t>(q) * k + p) * 3 + a];
  }
  for (int q = 0; q < lv; ++q)
    for (int a = 0; a < 3; ++a) mean_loc[q][a] /= heads * k;
  double best = -1.0;
  for (int i = 0; i < lv; ++i)
    for (int j = i + 1; j < lv; ++j) {
      double s = 0.0;
      for (int a = 0; a < 3; ++a) {
        double dd = mean_loc[i][a] - mean_loc[j][a];
        s += dd * dd;
      }
      double dist = std::sqrt(s);
      if (best < 0.0 || dist < best) best = dist;
    }
  m.min_pairwise_location_distance = best;
  return m;
}

}  // namespace dsr
