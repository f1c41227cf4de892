#pragma once

#include <array>
#include <string>
#include <vector>

#include "dsr/feature_volume.hpp"
#include "dsr/nn.hpp"
#include "dsr/params.hpp"
#include "dsr/regularizers.hpp"

namespace dsr {

struct SamplerConfig {
  int n_queries = 25;  // sampled token count L_v
  int n_heads = 4;     // M
  int n_points = 8;    // K, sampling points per head
  int n_layers = 4;
  int d = 64;
  int ffn_mult = 4;
  RegConfig reg;  // diversity regularizer settings carried with the sampler
  void validate() const;
};

// Output of one sampling pass: the L_v visual tokens plus everything needed
// for diversity metrics and qualitative dumps. `tokens` is the deformable
// aggregation output of the final layer (pre-residual): that branch is a
// convex combination of value-projected samples, so a constant volume yields
// identical tokens for every query, while the residual stream (`residual`)
// carries the evolving query states between layers.
struct SampledTokenSet {
  Tensor tokens;      // [L_v, d]
  Tensor ref_points;  // [L_v, 3], strictly inside (0,1)
  // locations[layer][head]: [L_v*K, 3] clamped absolute sampling points,
  // rows grouped per query; weights[layer][head]: [L_v, K] softmax weights
  std::vector<std::vector<Tensor>> locations;
  std::vector<std::vector<Tensor>> weights;
  Tensor residual;  // [L_v, d] final layer output
};

// question context: arithmetic mean over the token axis
Tensor pool_question(const Tensor& question_tokens);

// broadcast-add the pooled context to each query (first layer only)
Tensor condition_queries(const Tensor& queries, const Tensor& context);

// K*M distinct unit directions on the sphere (Fibonacci lattice), used to
// initialize the offset-projection biases as a small star stencil
std::vector<std::array<double, 3>> star_stencil_directions(int count);

struct CdaLayer {
  MultiHeadSelfAttention self_attn;
  // per head: deformable attention pieces of the aggregation branch
  std::vector<Linear> w_attn;  // d -> K, zero init (uniform weights at step 0)
  std::vector<Linear> w_off;   // d -> 3K, zero weights, star-stencil bias, 0.1x lr
  std::vector<Linear> w_val;   // d -> d_head
  std::vector<Linear> w_out;   // d_head -> d
  Ffn ffn;
  LayerNormBlock ln1, ln2, ln3;
};

struct DeformableSampler {
  SamplerConfig cfg;
  int d_head = 0;
  Tensor queries;   // [L_v, d] learnable, distinct N(0,1) init
  Linear ref_proj;  // d -> 3, logistic-squashed, 0.1x lr
  std::vector<CdaLayer> layers;

  static DeformableSampler make(ParamStore& store, const std::string& prefix,
                                const SamplerConfig& cfg, Rng& rng);

  // reference points from the conditioned first-layer queries, fixed for the pass
  Tensor predict_reference_points(const Tensor& conditioned) const;

  // the deformable aggregation branch of one layer: per head, softmax-weighted
  // combination of K value-projected trilinear samples around p_ref, heads
  // summed through their output projections
  Tensor cda_attention(const FeatureVolume& vol, const Tensor& z, const Tensor& p_ref, int layer,
                       std::vector<Tensor>* out_locations = nullptr,
                       std::vector<Tensor>* out_weights = nullptr) const;

  // one full layer: self-attention, deformable aggregation, feed-forward,
  // each with residual + layer norm; returns the new residual stream and the
  // aggregation branch output through `out_agg`
  Tensor cda_layer(const FeatureVolume& vol, const Tensor& z, const Tensor& p_ref, int layer,
                   Tensor* out_agg = nullptr, std::vector<Tensor>* out_locations = nullptr,
                   std::vector<Tensor>* out_weights = nullptr) const;

  SampledTokenSet sample_visual_tokens(const FeatureVolume& vol,
                                       const Tensor& question_tokens) const;
};

// fusion of global context and sampled local tokens, global block first;
// locations drive the 3-D positional embeddings downstream (global tokens sit
// at their temporal position with centered spatial coordinates, local tokens
// at their predicted reference point); locations stay in the autodiff graph
// so the loss can reach the reference-point projection through the codes
struct FusedVisualTokens {
  Tensor tokens;  // [n_global + n_local, d]
  int n_global = 0, n_local = 0;
  Tensor locations;  // [n_global + n_local, 3] normalized (t, y, x)
};

FusedVisualTokens fuse_global_local(const SampledTokenSet& sampled, const Tensor& global_ctx,
                                    bool use_global = true, bool use_local = true);

}  // namespace dsr
