#pragma once

#include <string>
#include <vector>

#include "dsr/dependency.hpp"
#include "dsr/feature_volume.hpp"
#include "dsr/nn.hpp"
#include "dsr/optimizer.hpp"
#include "dsr/params.hpp"
#include "dsr/regularizers.hpp"
#include "dsr/sampler.hpp"

namespace dsr {

enum class Strategy { DeformableDense, SparseRandom, UniformDense };

Strategy strategy_from_string(const std::string& s);
std::string strategy_to_string(Strategy s);

struct ModelConfig {
  int d = 64;
  int n_layers = 2;
  int n_heads = 4;
  int intermediate = 256;
  int answer_vocab = 0;
  int max_question_len = 100;
  SamplerConfig sampler;
  DepConfig dep;
  RegConfig reg;
  Strategy strategy = Strategy::DeformableDense;
  int n_clips = 4;          // sparse-random strategy
  int frames_per_clip = 2;
  bool clip_temporal_pool = false;  // mean-pool the clip frames instead of flattening
  bool use_global = true;
  bool use_local = true;
  std::uint64_t init_seed = 7;

  void validate() const;
  std::uint64_t hash() const;

  // 2 layers / 4 heads / d=64, the configuration the tests exercise
  static ModelConfig desk(int answer_vocab);
  // 12 layers / 12 heads / d=768 / intermediate 3072: constructible reference
  static ModelConfig paper_scale(int answer_vocab);
  // minimal dimensions for end-to-end finite-difference checks
  static ModelConfig tiny(int answer_vocab);
};

struct QuestionRecord {
  std::vector<int> token_ids;  // subword ids (for serialization / debugging)
  DependencyParse parse;
  Tensor embeddings;  // [L_q, d] fixed input features, one row per subword
  Tensor adjacency;   // [L_q, L_q] gold subword-level adjacency
  void validate() const;
};

struct LabeledExample {
  FeatureVolume video;
  QuestionRecord question;
  int label = 0;
};

// factorized sinusoidal 3-D position code: three d/3 bands (t, y, x), each a
// sin/cos ladder at frequencies pi * 2^k of the normalized coordinate, zero
// padded to d. Distinct coordinates give distinct codes from d >= 6 because
// the k=0 cosine is injective on [0,1].
Tensor positional_embedding_3d(double t, double y, double x, int d);
// batched constant variant
Tensor positional_embedding_3d_rows(const std::vector<std::array<double, 3>>& locations, int d);
// differentiable variant over a [n, 3] coordinate tensor; gradients flow back
// into predicted sampling locations
Tensor positional_embedding_3d_rows(const Tensor& locations, int d);

struct QaOutput {
  Tensor logits;         // [C]
  SampledTokenSet tokens;
  Tensor dep_attention;  // attention map used by the constrained head
};

struct QaModel {
  ModelConfig cfg;
  ParamStore store;
  DeformableSampler sampler;
  DependencyEncoder dep_encoder;
  Tensor cls_emb, sep_emb, type_visual, type_text;
  LayerNormBlock emb_ln;
  std::vector<TransformerBlock> blocks;
  Linear head_fc1, head_fc2;

  static QaModel make(const ModelConfig& cfg);

  Tensor encode_question(const QuestionRecord& q, Tensor* recorded_attn = nullptr) const;

  // [CLS] + visual block + [SEP] + question block, with type embeddings per
  // source and 3-D / 1-D positional embeddings
  Tensor assemble_sequence(const FusedVisualTokens& visual, const Tensor& question_enc) const;

  Tensor answer_logits(const Tensor& h_cls) const;

  // dense pipeline: dependency encoding, deformable sampling, global context,
  // fusion, cross-modal transformer, answer head
  QaOutput qa_forward(const FeatureVolume& vol, const QuestionRecord& q) const;

  // sparse baseline: each clip (consecutive raw frames, spatially flattened)
  // goes through the shared transformer; logits averaged across clips
  Tensor sparse_random_forward(const FeatureVolume& vol, const QuestionRecord& q,
                               const std::vector<int>& clip_starts) const;

  // all frames spatially flattened in one sequence (the quadratic baseline)
  Tensor uniform_dense_forward(const FeatureVolume& vol, const QuestionRecord& q) const;

  // strategy dispatch; sparse clip starts drawn from `clip_rng`
  QaOutput forward(const FeatureVolume& vol, const QuestionRecord& q, Rng* clip_rng) const;

  std::vector<int> draw_clip_starts(int t, Rng& rng) const;
};

// answer loss plus the configured diversity regularizer over the batch
Tensor total_loss(const Tensor& logits, int label, const std::vector<Tensor>& token_sets,
                  const std::vector<FeatureVolume>& volumes, const RegConfig& reg);

struct StepMetrics {
  int step = 0;
  double loss = 0.0;      // mean answer loss of the batch
  double reg = 0.0;       // regularizer value of the batch
  double accuracy = 0.0;  // batch train accuracy
};

struct TrainConfig {
  int epochs = 4;
  int batch_size = 8;
  OptimConfig optim;
  std::uint64_t shuffle_seed = 11;
  std::uint64_t clip_seed = 13;  // sparse clip placement stream
};

struct TrainResult {
  std::vector<StepMetrics> steps;
  double final_loss = 0.0;
};

// one pass over the dataset; batch loss = mean answer loss + reg/batch_size
// (so the per-example objective matches total_loss at batch size 1).
// Non-finite loss aborts with a diagnostic.
TrainResult train_epoch(QaModel& model, AdamW& opt, const std::vector<LabeledExample>& data,
                        const TrainConfig& cfg, int epoch_index);

// multi-epoch convenience wrapper; builds the optimizer with a warmup +
// linear-decay schedule spanning all epochs
TrainResult train_model(QaModel& model, const std::vector<LabeledExample>& data,
                        const TrainConfig& cfg);

double evaluate_accuracy(const QaModel& model, const std::vector<LabeledExample>& data,
                         std::uint64_t clip_seed = 99);

}  // namespace dsr
