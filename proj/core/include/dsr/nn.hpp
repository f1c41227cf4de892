#pragma once

#include <string>
#include <vector>

#include "dsr/params.hpp"
#include "dsr/tensor.hpp"

namespace dsr {

enum class Activation { Relu, Gelu };

struct LinearInit {
  double weight_std = -1.0;  // <0 means 1/sqrt(fan_in)
  bool zero_weight = false;
  std::vector<double> bias_init;  // empty means zeros
  double lr_mult = 1.0;
};

// y = x W + b with W stored [in, out]; accepts [n, in] or [in]
struct Linear {
  Tensor w, b;
  static Linear make(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                     const LinearInit& init = {});
  Tensor forward(const Tensor& x) const;
};

struct LayerNormBlock {
  Tensor gain, bias;
  double eps = 1e-5;
  static LayerNormBlock make(ParamStore& store, const std::string& name, int d);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
};

// standard multi-head self-attention over a token sequence [n, d];
// per-head projections are stored as separate matrices so no column slicing
// is needed. Scores are scaled by 1/sqrt(d_head).
struct MultiHeadSelfAttention {
  int n_heads = 0, d_head = 0;
  std::vector<Linear> wq, wk, wv;
  Linear wo;
  static MultiHeadSelfAttention make(ParamStore& store, const std::string& name, int d,
                                     int n_heads, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

// two-layer position-wise feed-forward
struct Ffn {
  Linear fc1, fc2;
  Activation act = Activation::Gelu;
  static Ffn make(ParamStore& store, const std::string& name, int d, int hidden, Activation act,
                  Rng& rng);
  Tensor forward(const Tensor& x) const;
};

// post-norm transformer encoder block: LN(x + MHA(x)), then LN(. + FFN(.))
struct TransformerBlock {
  MultiHeadSelfAttention attn;
  Ffn ffn;
  LayerNormBlock ln1, ln2;
  static TransformerBlock make(ParamStore& store, const std::string& name, int d, int n_heads,
                               int ffn_hidden, Activation act, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

// fixed sinusoidal table for 1-D positions, rows [n, d]
Tensor sinusoidal_positions(int n, int d);

}  // namespace dsr
