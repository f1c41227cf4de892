#include "dsr/sampler.hpp"

#include <cmath>

namespace dsr {

void SamplerConfig::validate() const {
  if (n_queries < 1) fail("SamplerConfig: L_v must be >= 1");
  if (n_heads < 1) fail("SamplerConfig: M must be >= 1");
  if (n_points < 1) fail("SamplerConfig: K must be >= 1");
  if (n_layers < 1) fail("SamplerConfig: n_layers must be >= 1");
  if (d < 1) fail("SamplerConfig: d must be >= 1");
  if (d % n_heads != 0)
    fail("SamplerConfig: d=" + std::to_string(d) + " not divisible by M=" +
         std::to_string(n_heads));
  if (ffn_mult < 1) fail("SamplerConfig: ffn_mult must be >= 1");
  reg.validate();
}

Tensor pool_question(const Tensor& question_tokens) {
  if (question_tokens.ndim() != 2 || question_tokens.dim(0) < 1)
    fail("pool_question: expected nonempty [L_q, d], got " +
         shape_str(question_tokens.shape()));
  return mean_rows(question_tokens);
}

Tensor condition_queries(const Tensor& queries, const Tensor& context) {
  if (queries.ndim() != 2 || context.ndim() != 1 || queries.dim(1) != context.dim(0))
    fail("condition_queries: shape mismatch " + shape_str(queries.shape()) + " vs " +
         shape_str(context.shape()));
  return add_rowvec(queries, context);
}

std::vector<std::array<double, 3>> star_stencil_directions(int count) {
  if (count < 1) fail("star_stencil_directions: count must be >= 1");
  // golden-angle spiral on the sphere: any two indices give distinct directions
  const double ga = 2.399963229728653;
  std::vector<std::array<double, 3>> dirs(count);
  for (int i = 0; i < count; ++i) {
    double z = count == 1 ? 0.0 : 1.0 - 2.0 * (i + 0.5) / count;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = ga * i;
    dirs[i] = {z, r * std::cos(phi), r * std::sin(phi)};
  }
  return dirs;
}

DeformableSampler DeformableSampler::make(ParamStore& store, const std::string& prefix,
                                          const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  DeformableSampler s;
  s.cfg = cfg;
  s.d_head = cfg.d / cfg.n_heads;
  s.queries = store.add(prefix + ".queries", Tensor::randn({cfg.n_queries, cfg.d}, rng));
  LinearInit ref_init;
  ref_init.lr_mult = 0.1;
  s.ref_proj = Linear::make(store, prefix + ".ref", cfg.d, 3, rng, ref_init);

  auto stencil = star_stencil_directions(cfg.n_heads * cfg.n_points);
  const double radius = 0.1;
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string lp = prefix + ".layer" + std::to_string(l);
    CdaLayer layer;
    layer.self_attn = MultiHeadSelfAttention::make(store, lp + ".self", cfg.d, cfg.n_heads, rng);
    for (int m = 0; m < cfg.n_heads; ++m) {
      std::string hp = lp + ".h" + std::to_string(m);
      LinearInit attn_init;
      attn_init.zero_weight = true;  // uniform sampling weights at step 0
      layer.w_attn.push_back(Linear::make(store, hp + ".attn", cfg.d, cfg.n_points, rng, attn_init));
      LinearInit off_init;
      off_init.zero_weight = true;
      off_init.lr_mult = 0.1;
      off_init.bias_init.resize(3 * cfg.n_points);
      for (int k = 0; k < cfg.n_points; ++k) {
        const auto& dir = stencil[m * cfg.n_points + k];
        for (int a = 0; a < 3; ++a) off_init.bias_init[3 * k + a] = radius * dir[a];
      }
      layer.w_off.push_back(Linear::make(store, hp + ".off", cfg.d, 3 * cfg.n_points, rng, off_init));
      layer.w_val.push_back(Linear::make(store, hp + ".val", cfg.d, s.d_head, rng));
      layer.w_out.push_back(Linear::make(store, hp + ".out", s.d_head, cfg.d, rng));
    }
    layer.ffn = Ffn::make(store, lp + ".ffn", cfg.d, cfg.ffn_mult * cfg.d, Activation::Relu, rng);
    layer.ln1 = LayerNormBlock::make(store, lp + ".ln1", cfg.d);
    layer.ln2 = LayerNormBlock::make(store, lp + ".ln2", cfg.d);
    layer.ln3 = LayerNormBlock::make(store, lp + ".ln3", cfg.d);
    s.layers.push_back(std::move(layer));
  }
  return s;
}

Tensor DeformableSampler::predict_reference_points(const Tensor& conditioned) const {
  return sigmoid(ref_proj.forward(conditioned));
}

Tensor DeformableSampler::cda_attention(const FeatureVolume& vol, const Tensor& z,
                                        const Tensor& p_ref, int layer,
                                        std::vector<Tensor>* out_locations,
                                        std::vector<Tensor>* out_weights) const {
  if (layer < 0 || layer >= cfg.n_layers) fail("cda_attention: bad layer index");
  if (z.ndim() != 2 || z.dim(0) != cfg.n_queries || z.dim(1) != cfg.d)
    fail("cda_attention: queries " + shape_str(z.shape()) + " do not match config");
  if (p_ref.ndim() != 2 || p_ref.dim(0) != cfg.n_queries || p_ref.dim(1) != 3)
    fail("cda_attention: reference points " + shape_str(p_ref.shape()) + " must be [L_v,3]");
  if (vol.d() != cfg.d)
    fail("cda_attention: volume channels " + std::to_string(vol.d()) + " != d " +
         std::to_string(cfg.d));
  const CdaLayer& L = layers[layer];
  Tensor base = repeat_rows(p_ref, cfg.n_points);  // [L_v*K, 3], query-major
  Tensor total;
  for (int m = 0; m < cfg.n_heads; ++m) {
    Tensor offsets = reshape(L.w_off[m].forward(z), {cfg.n_queries * cfg.n_points, 3});
    Tensor locs = clamp01(add(base, offsets));
    Tensor samples = trilinear_sample_many(vol, locs);          // [L_v*K, d]
    Tensor weights = softmax(L.w_attn[m].forward(z), 1);        // [L_v, K]
    Tensor projected = L.w_val[m].forward(samples);             // [L_v*K, d_head]
    Tensor agg = weighted_group_sum(projected, weights);        // [L_v, d_head]
    Tensor head_out = L.w_out[m].forward(agg);                  // [L_v, d]
    total = total.defined() ? add(total, head_out) : head_out;
    if (out_locations) out_locations->push_back(locs);
    if (out_weights) out_weights->push_back(weights);
  }
  return total;
}

Tensor DeformableSampler::cda_layer(const FeatureVolume& vol, const Tensor& z,
                                    const Tensor& p_ref, int layer, Tensor* out_agg,
                                    std::vector<Tensor>* out_locations,
                                    std::vector<Tensor>* out_weights) const {
  const CdaLayer& L = layers[layer];
  Tensor s1 = L.ln1.forward(add(z, L.self_attn.forward(z)));
  Tensor agg = cda_attention(vol, s1, p_ref, layer, out_locations, out_weights);
  Tensor s2 = L.ln2.forward(add(s1, agg));
  Tensor out = L.ln3.forward(add(s2, L.ffn.forward(s2)));
  if (out_agg) *out_agg = agg;
  return out;
}

SampledTokenSet DeformableSampler::sample_visual_tokens(const FeatureVolume& vol,
                                                        const Tensor& question_tokens) const {
  Tensor context = pool_question(question_tokens);
  Tensor z = condition_queries(queries, context);
  Tensor p_ref = predict_reference_points(z);
  SampledTokenSet set;
  set.ref_points = p_ref;
  Tensor agg;
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::vector<Tensor> locs, weights;
    z = cda_layer(vol, z, p_ref, l, &agg, &locs, &weights);
    set.locations.push_back(std::move(locs));
    set.weights.push_back(std::move(weights));
  }
  set.tokens = agg;
  set.residual = z;
  return set;
}

FusedVisualTokens fuse_global_local(const SampledTokenSet& sampled, const Tensor& global_ctx,
                                    bool use_global, bool use_local) {
  if (!use_global && !use_local) fail("fuse_global_local: nothing to fuse");
  FusedVisualTokens fused;
  std::vector<Tensor> parts, locs;
  if (use_global) {
    if (global_ctx.ndim() != 2) fail("fuse_global_local: global context must be [t, d]");
    int t = global_ctx.dim(0);
    fused.n_global = t;
    parts.push_back(global_ctx);
    std::vector<double> g(static_cast<size_t>(t) * 3);
    for (int j = 0; j < t; ++j) {
      g[j * 3] = t == 1 ? 0.5 : static_cast<double>(j) / (t - 1);
      g[j * 3 + 1] = 0.5;
      g[j * 3 + 2] = 0.5;
    }
    locs.push_back(Tensor::from_data({t, 3}, std::move(g)));
  }
  if (use_local) {
    if (!sampled.tokens.defined()) fail("fuse_global_local: no sampled tokens");
    if (use_global && sampled.tokens.dim(1) != global_ctx.dim(1))
      fail("fuse_global_local: width mismatch " + std::to_string(sampled.tokens.dim(1)) +
           " vs " + std::to_string(global_ctx.dim(1)));
    fused.n_local = sampled.tokens.dim(0);
    parts.push_back(sampled.tokens);
    locs.push_back(sampled.ref_points);
  }
  fused.tokens = parts.size() == 1 ? parts[0] : concat_rows(parts);
  fused.locations = locs.size() == 1 ? locs[0] : concat_rows(locs);
  return fused;
}

}  // namespace dsr
