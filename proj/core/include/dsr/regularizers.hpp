#pragma once

#include <string>
#include <vector>

#include "dsr/feature_volume.hpp"
#include "dsr/tensor.hpp"

namespace dsr {

enum class RegKind { None, SO, MCR, Contrastive };

RegKind reg_kind_from_string(const std::string& s);
std::string reg_kind_to_string(RegKind k);

struct RegConfig {
  RegKind kind = RegKind::SO;
  double lambda = 0.01;
  double eps = 0.5;  // MCR distortion
  double tau = 0.1;  // contrastive temperature
  // the written form excludes the positive pair from the denominator, unlike
  // the standard InfoNCE; this flag switches to the inclusive form
  bool contrastive_inclusive = false;
  void validate() const;
};

// soft orthogonality: lambda * sum_i ||G_i - I||_F^2 with G_i the L_v x L_v
// token Gram matrix of V_i (tokens as rows)
Tensor soft_orthogonality(const std::vector<Tensor>& v_batch, double lambda);

// maximal coding rate: -lambda * sum_i 0.5 * logdet(I + d/(L_v eps^2) G_i)
Tensor mcr_regularizer(const std::vector<Tensor>& v_batch, double lambda, double eps);

// contrastive term over pooled features: anchors are mean-pooled token sets,
// positives the matching mean-pooled volumes, negatives the other volumes in
// the batch; cosine similarity, temperature tau. Requires batch size >= 2.
Tensor contrastive_reg(const std::vector<Tensor>& v_batch,
                       const std::vector<FeatureVolume>& x_batch, double lambda, double tau,
                       bool inclusive_denominator = false);

// dispatch on cfg.kind; empty batch or kind none contributes exactly zero
Tensor diversity_regularizer(const RegConfig& cfg, const std::vector<Tensor>& v_batch,
                             const std::vector<FeatureVolume>& x_batch);

struct SampledTokenSet;

struct DiversityMetrics {
  // mean |G_ij|, i != j, over the unit-normalized token Gram matrix
  double mean_abs_offdiag_gram = 0.0;
  // min over query pairs of the distance between mean sampling locations
  // (final layer, averaged over heads and points)
  double min_pairwise_location_distance = 0.0;
};

DiversityMetrics diversity_metrics(const SampledTokenSet& sampled);

}  // namespace dsr
