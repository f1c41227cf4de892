#include "dsr/nn.hpp"

#include <cmath>

namespace dsr {

Tensor ParamStore::add(const std::string& name, Tensor value, double lr_mult, bool weight_decay) {
  if (name.empty()) fail("ParamStore::add: empty name");
  if (index_.count(name)) fail("ParamStore::add: duplicate parameter '" + name + "'");
  if (lr_mult < 0.0) fail("ParamStore::add: negative lr_mult for '" + name + "'");
  value.set_requires_grad(true);
  index_[name] = params_.size();
  params_.push_back(Parameter{name, value, lr_mult, weight_decay});
  return value;
}

const Parameter& ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail("ParamStore::find: no parameter '" + name + "'");
  return params_[it->second];
}

std::int64_t ParamStore::total_size() const {
  std::int64_t n = 0;
  for (const Parameter& p : params_) n += p.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (Parameter& p : params_) p.value.zero_grad();
}

Linear Linear::make(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                    const LinearInit& init) {
  if (in <= 0 || out <= 0) fail("Linear::make: bad dims for '" + name + "'");
  Linear l;
  if (init.zero_weight) {
    l.w = store.add(name + ".w", Tensor::zeros({in, out}), init.lr_mult);
  } else {
    double std = init.weight_std >= 0.0 ? init.weight_std : 1.0 / std::sqrt(in);
    l.w = store.add(name + ".w", Tensor::randn({in, out}, rng, std), init.lr_mult);
  }
  if (init.bias_init.empty()) {
    l.b = store.add(name + ".b", Tensor::zeros({out}), init.lr_mult, /*weight_decay=*/false);
  } else {
    if (static_cast<int>(init.bias_init.size()) != out)
      fail("Linear::make: bias_init length mismatch for '" + name + "'");
    l.b = store.add(name + ".b", Tensor::from_data({out}, init.bias_init), init.lr_mult,
                    /*weight_decay=*/false);
  }
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.ndim() == 1) {
    Tensor y = add_rowvec(matmul(reshape(x, {1, x.dim(0)}), w), b);
    return row(y, 0);
  }
  return add_rowvec(matmul(x, w), b);
}

LayerNormBlock LayerNormBlock::make(ParamStore& store, const std::string& name, int d) {
  LayerNormBlock ln;
  ln.gain = store.add(name + ".gain", Tensor::full({d}, 1.0), 1.0, /*weight_decay=*/false);
  ln.bias = store.add(name + ".bias", Tensor::zeros({d}), 1.0, /*weight_decay=*/false);
  return ln;
}

MultiHeadSelfAttention MultiHeadSelfAttention::make(ParamStore& store, const std::string& name,
                                                    int d, int n_heads, Rng& rng) {
  if (n_heads <= 0 || d % n_heads != 0)
    fail("MultiHeadSelfAttention::make: width " + std::to_string(d) +
         " not divisible by heads " + std::to_string(n_heads));
  MultiHeadSelfAttention a;
  a.n_heads = n_heads;
  a.d_head = d / n_heads;
  for (int m = 0; m < n_heads; ++m) {
    std::string hn = name + ".h" + std::to_string(m);
    a.wq.push_back(Linear::make(store, hn + ".q", d, a.d_head, rng));
    a.wk.push_back(Linear::make(store, hn + ".k", d, a.d_head, rng));
    a.wv.push_back(Linear::make(store, hn + ".v", d, a.d_head, rng));
  }
  a.wo = Linear::make(store, name + ".o", d, d, rng);
  return a;
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x) const {
  if (x.ndim() != 2) fail("MultiHeadSelfAttention: expected [n,d], got " + shape_str(x.shape()));
  double inv = 1.0 / std::sqrt(static_cast<double>(d_head));
  std::vector<Tensor> ctx;
  for (int m = 0; m < n_heads; ++m) {
    Tensor q = wq[m].forward(x);
    Tensor k = wk[m].forward(x);
    Tensor v = wv[m].forward(x);
    Tensor scores = scale(matmul(q, transpose(k)), inv);
    Tensor attn = softmax(scores, 1);
    ctx.push_back(matmul(attn, v));
  }
  return wo.forward(concat_cols(ctx));
}

Ffn Ffn::make(ParamStore& store, const std::string& name, int d, int hidden, Activation act,
              Rng& rng) {
  Ffn f;
  f.fc1 = Linear::make(store, name + ".fc1", d, hidden, rng);
  f.fc2 = Linear::make(store, name + ".fc2", hidden, d, rng);
  f.act = act;
  return f;
}

Tensor Ffn::forward(const Tensor& x) const {
  Tensor h = fc1.forward(x);
  h = act == Activation::Relu ? relu(h) : gelu(h);
  return fc2.forward(h);
}

TransformerBlock TransformerBlock::make(ParamStore& store, const std::string& name, int d,
                                        int n_heads, int ffn_hidden, Activation act, Rng& rng) {
  TransformerBlock b;
  b.attn = MultiHeadSelfAttention::make(store, name + ".attn", d, n_heads, rng);
  b.ffn = Ffn::make(store, name + ".ffn", d, ffn_hidden, act, rng);
  b.ln1 = LayerNormBlock::make(store, name + ".ln1", d);
  b.ln2 = LayerNormBlock::make(store, name + ".ln2", d);
  return b;
}

Tensor TransformerBlock::forward(const Tensor& x) const {
  Tensor h = ln1.forward(add(x, attn.forward(x)));
  return ln2.forward(add(h, ffn.forward(h)));
}

Tensor sinusoidal_positions(int n, int d) {
  if (n <= 0 || d <= 0) fail("sinusoidal_positions: bad dims");
  std::vector<double> out(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      double freq = std::pow(10000.0, -2.0 * (j / 2) / static_cast<double>(d));
      double a = i * freq;
      out[static_cast<size_t>(i) * d + j] = (j % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  return Tensor::from_data({n, d}, std::move(out));
}

}  // namespace dsr
