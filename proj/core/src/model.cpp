#include "dsr/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "detail.hpp"

namespace dsr {

Strategy strategy_from_string(const std::string& s) {
  if (s == "dense" || s == "deformable-dense" || s == "dsr") return Strategy::DeformableDense;
  if (s == "sparse" || s == "sparse-random") return Strategy::SparseRandom;
  if (s == "uniform" || s == "uniform-dense" || s == "baseline") return Strategy::UniformDense;
  fail("unknown strategy '" + s + "' (expected dense|sparse|uniform)");
}

std::string strategy_to_string(Strategy s) {
  switch (s) {
    case Strategy::DeformableDense: return "dense";
    case Strategy::SparseRandom: return "sparse";
    case Strategy::UniformDense: return "uniform";
  }
  fail("strategy_to_string: bad enum");
}

void ModelConfig::validate() const {
  if (d < 3) fail("ModelConfig: d must be >= 3");
  if (n_layers < 1 || n_heads < 1 || intermediate < 1) fail("ModelConfig: bad transformer dims");
  if (d % n_heads != 0) fail("ModelConfig: d not divisible by n_heads");
  if (answer_vocab < 2) fail("ModelConfig: answer vocabulary must have >= 2 classes");
  if (max_question_len < 1) fail("ModelConfig: max_question_len must be >= 1");
  if (sampler.d != d) fail("ModelConfig: sampler width disagrees with model width");
  sampler.validate();
  dep.validate(d);
  reg.validate();
  if (n_clips < 1) fail("ModelConfig: n_clips must be >= 1");
  if (frames_per_clip < 1) fail("ModelConfig: frames_per_clip must be >= 1");
  if (!use_global && !use_local) fail("ModelConfig: at least one visual branch required");
}

std::uint64_t ModelConfig::hash() const {
  std::ostringstream os;
  os << d << '|' << n_layers << '|' << n_heads << '|' << intermediate << '|' << answer_vocab
     << '|' << max_question_len << '|' << sampler.n_queries << '|' << sampler.n_heads << '|'
     << sampler.n_points << '|' << sampler.n_layers << '|' << sampler.ffn_mult << '|'
     << reg_kind_to_string(reg.kind) << '|' << reg.lambda << '|' << reg.eps << '|' << reg.tau
     << '|' << reg.contrastive_inclusive << '|' << dep.n_layers << '|' << dep.n_heads << '|'
     << dep.gold << '|' << strategy_to_string(strategy) << '|' << n_clips << '|'
     << frames_per_clip << '|' << clip_temporal_pool << '|' << use_global << '|' << use_local
     << '|' << init_seed;
  return fnv1a64(os.str());
}

ModelConfig ModelConfig::desk(int answer_vocab) {
  ModelConfig c;
  c.d = 64;
  c.n_layers = 2;
  c.n_heads = 4;
  c.intermediate = 256;
  c.answer_vocab = answer_vocab;
  c.sampler.d = 64;
  c.dep.n_heads = 4;
  return c;
}

ModelConfig ModelConfig::paper_scale(int answer_vocab) {
  ModelConfig c;
  c.d = 768;
  c.n_layers = 12;
  c.n_heads = 12;
  c.intermediate = 3072;
  c.answer_vocab = answer_vocab;
  c.sampler.d = 768;
  c.dep.n_heads = 12;
  return c;
}

ModelConfig ModelConfig::tiny(int answer_vocab) {
  ModelConfig c;
  c.d = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.intermediate = 16;
  c.answer_vocab = answer_vocab;
  c.sampler.d = 8;
  c.sampler.n_queries = 3;
  c.sampler.n_heads = 2;
  c.sampler.n_points = 2;
  c.sampler.n_layers = 2;
  c.sampler.ffn_mult = 2;
  c.dep.n_heads = 2;
  return c;
}

void QuestionRecord::validate() const {
  parse.validate();
  int n = parse.n_subwords();
  if (static_cast<int>(token_ids.size()) != n)
    fail("QuestionRecord: " + std::to_string(token_ids.size()) + " token ids for " +
         std::to_string(n) + " subwords");
  if (embeddings.ndim() != 2 || embeddings.dim(0) != n)
    fail("QuestionRecord: embeddings " + shape_str(embeddings.shape()) + " do not cover " +
         std::to_string(n) + " subwords");
  if (adjacency.ndim() != 2 || adjacency.dim(0) != n || adjacency.dim(1) != n)
    fail("QuestionRecord: adjacency " + shape_str(adjacency.shape()) + " must be [" +
         std::to_string(n) + "," + std::to_string(n) + "]");
}

Tensor positional_embedding_3d(double t, double y, double x, int d) {
  return reshape(positional_embedding_3d_rows({{t, y, x}}, d), {d});
}

namespace {

constexpr double pi = 3.14159265358979323846;

Tensor location_rows(const std::vector<std::array<double, 3>>& locs) {
  std::vector<double> flat;
  flat.reserve(locs.size() * 3);
  for (const auto& l : locs) flat.insert(flat.end(), l.begin(), l.end());
  return Tensor::from_data({static_cast<int>(locs.size()), 3}, std::move(flat));
}

}  // namespace

Tensor positional_embedding_3d_rows(const Tensor& locations, int d) {
  if (d < 3) fail("positional_embedding_3d: d must be >= 3");
  if (locations.ndim() != 2 || locations.dim(1) != 3)
    fail("positional_embedding_3d: locations " + shape_str(locations.shape()) +
         " must be [n, 3]");
  int band = d / 3;
  int n = locations.dim(0);
  std::vector<double> out(static_cast<size_t>(n) * d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) {
      double c = locations.data()[static_cast<size_t>(i) * 3 + a];
      if (!(c >= 0.0 && c <= 1.0))
        fail("positional_embedding_3d: coordinate " + std::to_string(c) + " outside [0,1]");
      for (int j = 0; j < band; ++j) {
        double omega = pi * std::pow(2.0, j / 2);
        double v = (j % 2 == 0) ? std::sin(omega * c) : std::cos(omega * c);
        out[static_cast<size_t>(i) * d + a * band + j] = v;
      }
    }
  return detail_make_result(
      {n, d}, std::move(out), "posenc3d", {locations},
      [loc = locations, d, band, n](const TensorImpl& o) {
        if (!loc.requires_grad()) return;
        detail_ensure_grad(loc.impl());
        for (int i = 0; i < n; ++i)
          for (int a = 0; a < 3; ++a) {
            double c = loc.data()[static_cast<size_t>(i) * 3 + a];
            double acc = 0.0;
            for (int j = 0; j < band; ++j) {
              double omega = pi * std::pow(2.0, j / 2);
              double dv = (j % 2 == 0) ? omega * std::cos(omega * c)
                                       : -omega * std::sin(omega * c);
              acc += o.grad[static_cast<size_t>(i) * d + a * band + j] * dv;
            }
            loc.impl()->grad[static_cast<size_t>(i) * 3 + a] += acc;
          }
      });
}

Tensor positional_embedding_3d_rows(const std::vector<std::array<double, 3>>& locations, int d) {
  return positional_embedding_3d_rows(location_rows(locations), d);
}

QaModel QaModel::make(const ModelConfig& cfg) {
  cfg.validate();
  QaModel m;
  m.cfg = cfg;
  Rng rng(cfg.init_seed);
  double estd = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  m.sampler = DeformableSampler::make(m.store, "sampler", cfg.sampler, rng);
  m.dep_encoder = DependencyEncoder::make(m.store, "dep", cfg.d, cfg.dep, rng);
  m.cls_emb = m.store.add("emb.cls", Tensor::randn({cfg.d}, rng, estd));
  m.sep_emb = m.store.add("emb.sep", Tensor::randn({cfg.d}, rng, estd));
  m.type_visual = m.store.add("emb.type_visual", Tensor::randn({cfg.d}, rng, estd));
  m.type_text = m.store.add("emb.type_text", Tensor::randn({cfg.d}, rng, estd));
  m.emb_ln = LayerNormBlock::make(m.store, "emb.ln", cfg.d);
  for (int l = 0; l < cfg.n_layers; ++l)
    m.blocks.push_back(TransformerBlock::make(m.store, "encoder.layer" + std::to_string(l),
                                              cfg.d, cfg.n_heads, cfg.intermediate,
                                              Activation::Gelu, rng));
  m.head_fc1 = Linear::make(m.store, "head.fc1", cfg.d, cfg.d, rng);
  m.head_fc2 = Linear::make(m.store, "head.fc2", cfg.d, cfg.answer_vocab, rng);
  return m;
}

Tensor QaModel::encode_question(const QuestionRecord& q, Tensor* recorded_attn) const {
  q.validate();
  if (q.embeddings.dim(1) != cfg.d)
    fail("encode_question: embedding width " + std::to_string(q.embeddings.dim(1)) +
         " != model width " + std::to_string(cfg.d));
  if (q.embeddings.dim(0) > cfg.max_question_len)
    fail("encode_question: question length " + std::to_string(q.embeddings.dim(0)) +
         " exceeds maximum " + std::to_string(cfg.max_question_len));
  return dep_encoder.forward(q.embeddings, q.adjacency, recorded_attn);
}

Tensor QaModel::assemble_sequence(const FusedVisualTokens& visual, const Tensor& question_enc) const {
  if (visual.tokens.ndim() != 2 || visual.tokens.dim(1) != cfg.d)
    fail("assemble_sequence: visual tokens " + shape_str(visual.tokens.shape()) +
         " do not match width " + std::to_string(cfg.d));
  if (question_enc.ndim() != 2 || question_enc.dim(1) != cfg.d)
    fail("assemble_sequence: question block " + shape_str(question_enc.shape()) +
         " does not match width " + std::to_string(cfg.d));
  if (visual.locations.ndim() != 2 || visual.locations.dim(1) != 3 ||
      visual.locations.dim(0) != visual.tokens.dim(0))
    fail("assemble_sequence: locations " + shape_str(visual.locations.shape()) + " for " +
         std::to_string(visual.tokens.dim(0)) + " visual tokens");
  Tensor vis_pos = positional_embedding_3d_rows(visual.locations, cfg.d);
  Tensor vis = add_rowvec(add(visual.tokens, vis_pos), type_visual);
  int lq = question_enc.dim(0);
  Tensor que = add_rowvec(add(question_enc, sinusoidal_positions(lq, cfg.d)), type_text);
  Tensor seq = concat_rows(
      {reshape(cls_emb, {1, cfg.d}), vis, reshape(sep_emb, {1, cfg.d}), que});
  return emb_ln.forward(seq);
}

Tensor QaModel::answer_logits(const Tensor& h_cls) const {
  return head_fc2.forward(gelu(head_fc1.forward(h_cls)));
}

QaOutput QaModel::qa_forward(const FeatureVolume& vol, const QuestionRecord& q) const {
  if (vol.d() != cfg.d)
    fail("qa_forward: volume channels " + std::to_string(vol.d()) + " != model width " +
         std::to_string(cfg.d));
  QaOutput out;
  Tensor q_enc = encode_question(q, &out.dep_attention);
  out.tokens = sampler.sample_visual_tokens(vol, q_enc);
  Tensor global = cfg.use_global ? spatial_mean(vol) : Tensor();
  FusedVisualTokens fused = fuse_global_local(out.tokens, global, cfg.use_global, cfg.use_local);
  Tensor h = assemble_sequence(fused, q_enc);
  for (const TransformerBlock& b : blocks) h = b.forward(h);
  out.logits = answer_logits(row(h, 0));
  return out;
}

Tensor QaModel::sparse_random_forward(const FeatureVolume& vol, const QuestionRecord& q,
                                      const std::vector<int>& clip_starts) const {
  if (vol.d() != cfg.d)
    fail("sparse_random_forward: volume channels " + std::to_string(vol.d()) +
         " != model width " + std::to_string(cfg.d));
  if (clip_starts.empty()) fail("sparse_random_forward: no clips");
  if (cfg.frames_per_clip > vol.t())
    fail("sparse_random_forward: clip of " + std::to_string(cfg.frames_per_clip) +
         " frames longer than video with t=" + std::to_string(vol.t()));
  Tensor q_enc = encode_question(q);
  Tensor total;
  for (int s : clip_starts) {
    if (s < 0 || s + cfg.frames_per_clip > vol.t())
      fail("sparse_random_forward: clip start " + std::to_string(s) + " out of range");
    std::vector<int> frames(cfg.frames_per_clip);
    for (int i = 0; i < cfg.frames_per_clip; ++i) frames[i] = s + i;
    FusedVisualTokens fv;
    fv.tokens = volume_tokens(vol, frames, cfg.clip_temporal_pool);
    fv.locations = location_rows(volume_token_locations(vol, frames, cfg.clip_temporal_pool));
    fv.n_local = fv.tokens.dim(0);
    Tensor h = assemble_sequence(fv, q_enc);
    for (const TransformerBlock& b : blocks) h = b.forward(h);
    Tensor logits = answer_logits(row(h, 0));
    total = total.defined() ? add(total, logits) : logits;
  }
  // mean of logits, not probabilities
  return scale(total, 1.0 / static_cast<double>(clip_starts.size()));
}

Tensor QaModel::uniform_dense_forward(const FeatureVolume& vol, const QuestionRecord& q) const {
  if (vol.d() != cfg.d)
    fail("uniform_dense_forward: volume channels " + std::to_string(vol.d()) +
         " != model width " + std::to_string(cfg.d));
  Tensor q_enc = encode_question(q);
  std::vector<int> frames(vol.t());
  for (int i = 0; i < vol.t(); ++i) frames[i] = i;
  FusedVisualTokens fv;
  fv.tokens = volume_tokens(vol, frames, false);
  fv.locations = location_rows(volume_token_locations(vol, frames, false));
  fv.n_local = fv.tokens.dim(0);
  Tensor h = assemble_sequence(fv, q_enc);
  for (const TransformerBlock& b : blocks) h = b.forward(h);
  return answer_logits(row(h, 0));
}

std::vector<int> QaModel::draw_clip_starts(int t, Rng& rng) const {
  if (cfg.frames_per_clip > t)
    fail("draw_clip_starts: clip of " + std::to_string(cfg.frames_per_clip) +
         " frames longer than video with t=" + std::to_string(t));
  std::vector<int> starts(cfg.n_clips);
  for (int i = 0; i < cfg.n_clips; ++i) starts[i] = rng.uniform_int(0, t - cfg.frames_per_clip);
  return starts;
}

QaOutput QaModel::forward(const FeatureVolume& vol, const QuestionRecord& q, Rng* clip_rng) const {
  switch (cfg.strategy) {
    case Strategy::DeformableDense: return qa_forward(vol, q);
    case Strategy::SparseRandom: {
      if (!clip_rng) fail("forward: sparse-random strategy needs a clip rng");
      QaOutput out;
      out.logits = sparse_random_forward(vol, q, draw_clip_starts(vol.t(), *clip_rng));
      return out;
    }
    case Strategy::UniformDense: {
      QaOutput out;
      out.logits = uniform_dense_forward(vol, q);
      return out;
    }
  }
  fail("forward: bad strategy");
}

Tensor total_loss(const Tensor& logits, int label, const std::vector<Tensor>& token_sets,
                  const std::vector<FeatureVolume>& volumes, const RegConfig& reg) {
  Tensor open = cross_entropy(logits, label);
  return add(open, diversity_regularizer(reg, token_sets, volumes));
}

namespace {

int argmax(const Tensor& logits) {
  const std::vector<double>& v = logits.data();
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace

TrainResult train_epoch(QaModel& model, AdamW& opt, const std::vector<LabeledExample>& data,
                        const TrainConfig& cfg, int epoch_index) {
  if (data.empty()) fail("train_epoch: empty dataset");
  if (cfg.batch_size < 1) fail("train_epoch: batch_size must be >= 1");
  int n = static_cast<int>(data.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng shuffle(Rng::derive(cfg.shuffle_seed, epoch_index));
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.uniform_int(0, i)]);
  Rng clips(Rng::derive(cfg.clip_seed, epoch_index));

  TrainResult res;
  bool dense = model.cfg.strategy == Strategy::DeformableDense;
  for (int base = 0; base < n; base += cfg.batch_size) {
    int bsz = std::min(cfg.batch_size, n - base);
    model.store.zero_grad();
    Tensor ce_sum;
    std::vector<Tensor> token_sets;
    std::vector<FeatureVolume> vols;
    int correct = 0;
    for (int bi = 0; bi < bsz; ++bi) {
      const LabeledExample& ex = data[order[base + bi]];
      QaOutput out = model.forward(ex.video, ex.question, &clips);
      Tensor ce = cross_entropy(out.logits, ex.label);
      ce_sum = ce_sum.defined() ? add(ce_sum, ce) : ce;
      if (argmax(out.logits) == ex.label) ++correct;
      if (dense && model.cfg.reg.kind != RegKind::None) {
        token_sets.push_back(out.tokens.tokens);
        vols.push_back(ex.video);
      }
    }
    Tensor reg = diversity_regularizer(model.cfg.reg, token_sets, vols);
    Tensor loss = scale(add(ce_sum, reg), 1.0 / bsz);
    StepMetrics sm;
    sm.loss = ce_sum.value() / bsz;
    sm.reg = reg.value();
    sm.accuracy = static_cast<double>(correct) / bsz;
    if (!std::isfinite(loss.value()))
      fail("train_epoch: non-finite loss at step " + std::to_string(opt.steps_taken() + 1) +
           " (answer loss " + std::to_string(sm.loss) + ", regularizer " +
           std::to_string(sm.reg) + ")");
    backward(loss);
    opt.step(model.store);
    sm.step = opt.steps_taken();
    res.steps.push_back(sm);
  }
  res.final_loss = res.steps.back().loss;
  return res;
}

TrainResult train_model(QaModel& model, const std::vector<LabeledExample>& data,
                        const TrainConfig& cfg) {
  if (data.empty()) fail("train_model: empty dataset");
  TrainConfig tc = cfg;
  int steps_per_epoch =
      (static_cast<int>(data.size()) + tc.batch_size - 1) / tc.batch_size;
  if (tc.optim.total_steps == 0) {
    tc.optim.total_steps = tc.epochs * steps_per_epoch;
    tc.optim.warmup_steps = tc.optim.total_steps / 10;
  }
  AdamW opt(model.store, tc.optim);
  TrainResult all;
  for (int e = 0; e < tc.epochs; ++e) {
    TrainResult r = train_epoch(model, opt, data, tc, e);
    all.steps.insert(all.steps.end(), r.steps.begin(), r.steps.end());
  }
  all.final_loss = all.steps.back().loss;
  return all;
}

double evaluate_accuracy(const QaModel& model, const std::vector<LabeledExample>& data,
                         std::uint64_t clip_seed) {
  if (data.empty()) fail("evaluate_accuracy: empty dataset");
  NoGradGuard ng;
  Rng clips(clip_seed);
  int correct = 0;
  for (const LabeledExample& ex : data) {
    QaOutput out = model.forward(ex.video, ex.question, &clips);
    if (argmax(out.logits) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / data.size();
}

}  // namespace dsr
