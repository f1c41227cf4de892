#include "dsr/dependency.hpp"

#include <cmath>
#include <sstream>

namespace dsr {

int DependencyParse::n_subwords() const {
  int n = 0;
  for (int c : subword_counts) n += c;
  return n;
}

void DependencyParse::validate() const {
  int n = n_words();
  if (n < 1) fail("DependencyParse: empty parse");
  if (static_cast<int>(governor.size()) != n || static_cast<int>(subword_counts.size()) != n)
    fail("DependencyParse: field lengths disagree");
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    if (governor[i] == -1) {
      ++roots;
    } else if (governor[i] < 0 || governor[i] >= n) {
      fail("DependencyParse: governor index " + std::to_string(governor[i]) +
           " out of range for word " + std::to_string(i));
    } else if (governor[i] == i) {
      fail("DependencyParse: word " + std::to_string(i) + " governs itself");
    }
    if (subword_counts[i] < 1)
      fail("DependencyParse: empty segmentation for word " + std::to_string(i));
  }
  if (roots != 1) fail("DependencyParse: expected exactly one root, found " + std::to_string(roots));
  // every word must reach the root without revisiting (tree check)
  for (int i = 0; i < n; ++i) {
    int cur = i, steps = 0;
    while (governor[cur] != -1) {
      cur = governor[cur];
      if (++steps > n) fail("DependencyParse: cycle involving word " + std::to_string(i));
    }
  }
}

DependencyParse parse_dependency_lines(const std::string& text) {
  DependencyParse p;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string surface;
    int gov, count;
    if (!(ls >> surface)) continue;  // blank line
    if (!(ls >> gov >> count))
      fail("parse_dependency_lines: line " + std::to_string(lineno) +
           ": expected 'surface governor subwords'");
    p.words.push_back(surface);
    p.governor.push_back(gov);
    p.subword_counts.push_back(count);
  }
  p.validate();
  return p;
}

Tensor build_adjacency(const DependencyParse& parse) {
  parse.validate();
  int n = parse.n_words();
  std::vector<double> a(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    int g = parse.governor[i] == -1 ? i : parse.governor[i];
    a[static_cast<size_t>(i) * n + g] = 1.0;
  }
  return Tensor::from_data({n, n}, std::move(a));
}

Tensor reindex_for_subwords(const DependencyParse& parse, int n_special_suffix) {
  parse.validate();
  if (n_special_suffix < 0) fail("reindex_for_subwords: negative special count");
  int nw = parse.n_words();
  std::vector<int> first(nw), last(nw);
  int pos = 0;
  for (int w = 0; w < nw; ++w) {
    first[w] = pos;
    pos += parse.subword_counts[w];
    last[w] = pos - 1;
  }
  int n = pos + n_special_suffix;
  std::vector<double> a(static_cast<size_t>(n) * n, 0.0);
  for (int w = 0; w < nw; ++w) {
    for (int s = first[w]; s < last[w]; ++s)
      a[static_cast<size_t>(s) * n + (s + 1)] = 1.0;  // non-rightmost -> right neighbor
    int target = parse.governor[w] == -1 ? last[w] : last[parse.governor[w]];
    a[static_cast<size_t>(last[w]) * n + target] = 1.0;
  }
  for (int s = pos; s < n; ++s) a[static_cast<size_t>(s) * n + s] = 1.0;
  return Tensor::from_data({n, n}, std::move(a));
}

void DepConfig::validate(int d) const {
  if (n_layers < 1) fail("DepConfig: n_layers must be >= 1");
  if (n_heads < 1) fail("DepConfig: n_heads must be >= 1");
  if (d % n_heads != 0)
    fail("DepConfig: d=" + std::to_string(d) + " not divisible by n_heads=" +
         std::to_string(n_heads));
}

DependencyEncoder DependencyEncoder::make(ParamStore& store, const std::string& prefix, int d,
                                          const DepConfig& cfg, Rng& rng) {
  cfg.validate(d);
  DependencyEncoder enc;
  enc.cfg = cfg;
  enc.d = d;
  enc.d_head = d / cfg.n_heads;
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string lp = prefix + ".layer" + std::to_string(l);
    DepEncoderLayer layer;
    if (l == 0) {
      layer.dep.wq = Linear::make(store, lp + ".dep.q", d, enc.d_head, rng);
      layer.dep.wk = Linear::make(store, lp + ".dep.k", d, enc.d_head, rng);
      layer.dep.wv = Linear::make(store, lp + ".dep.v", d, enc.d_head, rng);
      layer.dep.u = store.add(lp + ".dep.u",
                              Tensor::randn({enc.d_head, enc.d_head}, rng,
                                            1.0 / std::sqrt(enc.d_head)));
    }
    int std_heads = l == 0 ? cfg.n_heads - 1 : cfg.n_heads;
    for (int m = 0; m < std_heads; ++m) {
      std::string hp = lp + ".h" + std::to_string(m);
      layer.wq.push_back(Linear::make(store, hp + ".q", d, enc.d_head, rng));
      layer.wk.push_back(Linear::make(store, hp + ".k", d, enc.d_head, rng));
      layer.wv.push_back(Linear::make(store, hp + ".v", d, enc.d_head, rng));
    }
    layer.wo = Linear::make(store, lp + ".o", d, d, rng);
    layer.ffn = Ffn::make(store, lp + ".ffn", d, 4 * d, Activation::Gelu, rng);
    layer.ln1 = LayerNormBlock::make(store, lp + ".ln1", d);
    layer.ln2 = LayerNormBlock::make(store, lp + ".ln2", d);
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

Tensor DependencyEncoder::biaffine_scores(const Tensor& o) const {
  if (o.ndim() != 2 || o.dim(1) != d)
    fail("biaffine_scores: expected [L_q," + std::to_string(d) + "], got " +
         shape_str(o.shape()));
  const DepHead& hd = layers.at(0).dep;
  Tensor q = hd.wq.forward(o);
  Tensor k = hd.wk.forward(o);
  // Eq. form: softmax(Q U K^T) over keys, no extra scaling
  return softmax(matmul(matmul(q, hd.u), transpose(k)), 1);
}

static void check_row_stochastic(const Tensor& a, const char* op) {
  if (a.ndim() != 2 || a.dim(0) != a.dim(1))
    fail(std::string(op) + ": adjacency must be square, got " + shape_str(a.shape()));
  int n = a.dim(0);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += a.data()[static_cast<size_t>(i) * n + j];
    if (std::fabs(s - 1.0) > 1e-6)
      fail(std::string(op) + ": adjacency row " + std::to_string(i) + " sums to " +
           std::to_string(s));
  }
}

Tensor DependencyEncoder::dependency_head(const Tensor& o, const Tensor& adjacency) const {
  check_row_stochastic(adjacency, "dependency_head");
  if (adjacency.dim(0) != o.dim(0))
    fail("dependency_head: adjacency size " + std::to_string(adjacency.dim(0)) +
         " != sequence length " + std::to_string(o.dim(0)));
  return matmul(adjacency, layers.at(0).dep.wv.forward(o));
}

Tensor DependencyEncoder::forward(const Tensor& question_tokens, const Tensor& adjacency,
                                  Tensor* recorded_attn) const {
  if (question_tokens.ndim() != 2 || question_tokens.dim(1) != d)
    fail("DependencyEncoder: expected [L_q," + std::to_string(d) + "], got " +
         shape_str(question_tokens.shape()));
  double inv = 1.0 / std::sqrt(static_cast<double>(d_head));
  Tensor x = question_tokens;
  for (size_t l = 0; l < layers.size(); ++l) {
    const DepEncoderLayer& L = layers[l];
    std::vector<Tensor> ctx;
    if (l == 0) {
      if (cfg.gold) {
        check_row_stochastic(adjacency, "DependencyEncoder");
        if (adjacency.dim(0) != x.dim(0))
          fail("DependencyEncoder: adjacency size " + std::to_string(adjacency.dim(0)) +
               " != question length " + std::to_string(x.dim(0)));
        if (recorded_attn) *recorded_attn = adjacency;
        ctx.push_back(matmul(adjacency, L.dep.wv.forward(x)));
      } else {
        Tensor a = biaffine_scores(x);
        if (recorded_attn) *recorded_attn = a;
        ctx.push_back(matmul(a, L.dep.wv.forward(x)));
      }
    }
    for (size_t m = 0; m < L.wq.size(); ++m) {
      Tensor q = L.wq[m].forward(x);
      Tensor k = L.wk[m].forward(x);
      Tensor v = L.wv[m].forward(x);
      Tensor attn = softmax(scale(matmul(q, transpose(k)), inv), 1);
      ctx.push_back(matmul(attn, v));
    }
    Tensor h = L.ln1.forward(add(x, L.wo.forward(concat_cols(ctx))));
    x = L.ln2.forward(add(h, L.ffn.forward(h)));
  }
  return x;
}

}  // namespace dsr
