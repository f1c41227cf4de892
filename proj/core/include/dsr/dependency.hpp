#pragma once

#include <string>
#include <vector>

#include "dsr/nn.hpp"
#include "dsr/params.hpp"
#include "dsr/tensor.hpp"

namespace dsr {

// A word-level dependency parse plus the BPE segmentation of each word.
// Input format (parse files, one token per line, '#' comments allowed):
//   surface  governor-word-index(0-based, root = -1)  subword-count
struct DependencyParse {
  std::vector<std::string> words;
  std::vector<int> governor;        // per word, -1 marks the single root
  std::vector<int> subword_counts;  // per word, >= 1

  int n_words() const { return static_cast<int>(words.size()); }
  int n_subwords() const;
  // single root, indices in range, acyclic and connected to the root
  void validate() const;
};

DependencyParse parse_dependency_lines(const std::string& text);

// word-level gold adjacency: A[q2, q1] = 1 iff q1 governs q2; the root row is
// diagonal (self-loop keeps every row one-hot). Constant, not differentiable.
Tensor build_adjacency(const DependencyParse& parse);

// subword-level adjacency: the rightmost subword of a word points at the
// rightmost subword of its governor word (the root's at itself); every other
// subword points at its right neighbor. `n_special_suffix` extra positions
// are appended with diagonal rows (special tokens take part in attention but
// not in the tree).
Tensor reindex_for_subwords(const DependencyParse& parse, int n_special_suffix = 0);

struct DepConfig {
  int n_layers = 2;
  int n_heads = 12;  // paper scale; the desk config uses 4
  bool gold = true;  // hard adjacency at train and inference (the default)
  void validate(int d) const;
};

// first-layer attention head with the dependency constraint; the bi-affine
// trio (wq, wk, u) only enters the graph in learned mode
struct DepHead {
  Linear wq, wk, wv;
  Tensor u;  // [d_head, d_head]
};

struct DepEncoderLayer {
  DepHead dep;                    // head 1 (only constrained in layer 1)
  std::vector<Linear> wq, wk, wv; // standard heads 2..n
  Linear wo;
  Ffn ffn;
  LayerNormBlock ln1, ln2;
};

struct DependencyEncoder {
  DepConfig cfg;
  int d = 0, d_head = 0;
  std::vector<DepEncoderLayer> layers;

  static DependencyEncoder make(ParamStore& store, const std::string& prefix, int d,
                                const DepConfig& cfg, Rng& rng);

  // learned-mode attention of the constrained head: softmax(Q U K^T) rows
  Tensor biaffine_scores(const Tensor& o) const;

  // A (O W_v): in gold mode A is the one-hot adjacency so row i is exactly the
  // value vector of i's governor
  Tensor dependency_head(const Tensor& o, const Tensor& adjacency) const;

  // 2-layer encoder; layer 1 head 1 is the dependency head (gold or bi-affine
  // by cfg.gold), all other heads standard scaled-dot attention. The attention
  // map actually used by the constrained head is stored in *recorded_attn.
  Tensor forward(const Tensor& question_tokens, const Tensor& adjacency,
                 Tensor* recorded_attn = nullptr) const;
};

}  // namespace dsr
