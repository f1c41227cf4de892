#include "dsr/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "dsr/rng.hpp"

namespace dsr {

namespace {

struct NameParts {
  const char* full;
  const char* head;
  const char* tail;
};

// greek-letter event names, each split into two subword pieces
const NameParts kNames[] = {
    {"alpha", "al", "pha"},   {"beta", "be", "ta"},     {"gamma", "gam", "ma"},
    {"delta", "del", "ta"},   {"epsilon", "epsi", "lon"}, {"zeta", "ze", "ta"},
    {"eta", "e", "ta"},       {"theta", "the", "ta"},   {"iota", "io", "ta"},
    {"kappa", "kap", "pa"},   {"lambda", "lamb", "da"}, {"mu", "m", "u"},
};
constexpr int kMaxArchetypes = static_cast<int>(sizeof(kNames) / sizeof(kNames[0]));

// fixed subword ids: the shared question words, then two pieces per name
enum : int { kWhich = 0, kEvent, kOccur, kRed, kFirst, kLast, kBefore, kAfter, kNameBase };

int name_subword(int archetype, int piece) { return kNameBase + 2 * archetype + piece; }

}  // namespace

void SyntheticTaskConfig::validate() const {
  if (t < 1 || h < 1 || w < 1 || d < 1) fail("SyntheticTaskConfig: bad volume dims");
  if (n_archetypes < 2) fail("SyntheticTaskConfig: need at least 2 archetypes");
  if (n_archetypes > kMaxArchetypes)
    fail("SyntheticTaskConfig: at most " + std::to_string(kMaxArchetypes) + " archetypes named");
  if (events_per_video < 2) fail("SyntheticTaskConfig: ordering needs >= 2 events per video");
  if (events_per_video > n_archetypes)
    fail("SyntheticTaskConfig: events per video exceed distinct archetypes");
  if (event_duration < 1) fail("SyntheticTaskConfig: event_duration must be >= 1");
  if (t / events_per_video < event_duration)
    fail("SyntheticTaskConfig: " + std::to_string(events_per_video) + " events of " +
         std::to_string(event_duration) + " frames do not fit disjointly in t=" +
         std::to_string(t));
  if (event_extent < 1 || event_extent > h || event_extent > w)
    fail("SyntheticTaskConfig: event_extent outside the spatial grid");
  if (noise_std < 0.0) fail("SyntheticTaskConfig: negative noise_std");
  if (n_train < 1 || n_test < 1) fail("SyntheticTaskConfig: empty split");
}

std::string template_to_string(QuestionTemplate t) {
  switch (t) {
    case QuestionTemplate::First: return "first";
    case QuestionTemplate::Last: return "last";
    case QuestionTemplate::Before: return "before";
    case QuestionTemplate::After: return "after";
  }
  fail("template_to_string: bad enum");
}

namespace {

Tensor draw_signatures(const SyntheticTaskConfig& cfg, Rng& rng) {
  std::vector<double> rows;
  rows.reserve(static_cast<size_t>(cfg.n_archetypes) * cfg.d);
  for (int i = 0; i < cfg.n_archetypes; ++i) {
    std::vector<double> v(cfg.d);
    bool ok = false;
    for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
      double nrm = 0.0;
      for (int c = 0; c < cfg.d; ++c) {
        v[c] = rng.normal();
        nrm += v[c] * v[c];
      }
      nrm = std::sqrt(nrm);
      if (nrm == 0.0) continue;
      for (int c = 0; c < cfg.d; ++c) v[c] /= nrm;
      ok = true;
      for (int j = 0; j < i && ok; ++j) {
        double dot = 0.0;
        for (int c = 0; c < cfg.d; ++c) dot += v[c] * rows[static_cast<size_t>(j) * cfg.d + c];
        if (std::abs(dot) >= 0.1) ok = false;
      }
    }
    if (!ok)
      fail("draw_signatures: could not separate " + std::to_string(cfg.n_archetypes) +
           " signatures at d=" + std::to_string(cfg.d));
    rows.insert(rows.end(), v.begin(), v.end());
  }
  return Tensor::from_data({cfg.n_archetypes, cfg.d}, std::move(rows));
}

DependencyParse template_parse(QuestionTemplate tmpl, const std::string& name) {
  DependencyParse p;
  switch (tmpl) {
    case QuestionTemplate::First:
    case QuestionTemplate::Last:
      p.words = {"which", "event", "occurred",
                 tmpl == QuestionTemplate::First ? "first" : "last"};
      p.governor = {1, 2, -1, 2};
      p.subword_counts = {1, 1, 2, 1};
      break;
    case QuestionTemplate::Before:
    case QuestionTemplate::After:
      p.words = {"which", "event", "occurred",
                 tmpl == QuestionTemplate::Before ? "before" : "after", "event", name};
      p.governor = {1, 2, -1, 2, 3, 4};
      p.subword_counts = {1, 1, 2, 1, 1, 2};
      break;
  }
  return p;
}

std::vector<int> template_token_ids(QuestionTemplate tmpl, int queried_archetype) {
  switch (tmpl) {
    case QuestionTemplate::First:
      return {kWhich, kEvent, kOccur, kRed, kFirst};
    case QuestionTemplate::Last:
      return {kWhich, kEvent, kOccur, kRed, kLast};
    case QuestionTemplate::Before:
      return {kWhich, kEvent, kOccur, kRed, kBefore, kEvent,
              name_subword(queried_archetype, 0), name_subword(queried_archetype, 1)};
    case QuestionTemplate::After:
      return {kWhich, kEvent, kOccur, kRed, kAfter, kEvent,
              name_subword(queried_archetype, 0), name_subword(queried_archetype, 1)};
  }
  fail("template_token_ids: bad enum");
}

TaskExample make_example(const SyntheticTaskConfig& cfg, const Tensor& signatures,
                         const Tensor& vocab_emb, int target, Rng& rng) {
  TaskExample ex;
  ex.tmpl = static_cast<QuestionTemplate>(rng.uniform_int(0, 3));
  ex.label = target;

  int k = cfg.events_per_video;
  std::vector<int> others;
  for (int a = 0; a < cfg.n_archetypes; ++a)
    if (a != target) others.push_back(a);
  for (int i = static_cast<int>(others.size()) - 1; i > 0; --i)
    std::swap(others[i], others[rng.uniform_int(0, i)]);

  // archetype per temporal slot; the target lands where the template needs it
  std::vector<int> slot_arch(k, -1);
  int queried_slot = -1;
  switch (ex.tmpl) {
    case QuestionTemplate::First: slot_arch[0] = target; break;
    case QuestionTemplate::Last: slot_arch[k - 1] = target; break;
    case QuestionTemplate::Before:
      queried_slot = rng.uniform_int(1, k - 1);
      slot_arch[queried_slot - 1] = target;
      break;
    case QuestionTemplate::After:
      queried_slot = rng.uniform_int(0, k - 2);
      slot_arch[queried_slot + 1] = target;
      break;
  }
  size_t next_other = 0;
  if (queried_slot >= 0) {
    ex.queried_archetype = others[next_other++];
    slot_arch[queried_slot] = ex.queried_archetype;
  }
  for (int s = 0; s < k; ++s)
    if (slot_arch[s] < 0) slot_arch[s] = others[next_other++];

  int slot_len = cfg.t / k;
  for (int s = 0; s < k; ++s) {
    PlantedEvent ev;
    ev.archetype = slot_arch[s];
    ev.duration = cfg.event_duration;
    ev.extent = cfg.event_extent;
    ev.t0 = s * slot_len + rng.uniform_int(0, slot_len - cfg.event_duration);
    ev.y0 = rng.uniform_int(0, cfg.h - cfg.event_extent);
    ev.x0 = rng.uniform_int(0, cfg.w - cfg.event_extent);
    ex.events.push_back(ev);
  }

  std::vector<double> vol(static_cast<size_t>(cfg.d) * cfg.t * cfg.h * cfg.w);
  for (double& x : vol) x = cfg.noise_std * rng.normal();
  for (const PlantedEvent& ev : ex.events) {
    const double* sig = signatures.data().data() + static_cast<size_t>(ev.archetype) * cfg.d;
    for (int c = 0; c < cfg.d; ++c)
      for (int tt = ev.t0; tt < ev.t0 + ev.duration; ++tt)
        for (int y = ev.y0; y < ev.y0 + ev.extent; ++y)
          for (int x = ev.x0; x < ev.x0 + ev.extent; ++x)
            vol[((static_cast<size_t>(c) * cfg.t + tt) * cfg.h + y) * cfg.w + x] +=
                cfg.event_amplitude * sig[c];
  }
  ex.video = FeatureVolume(Tensor::from_data({cfg.d, cfg.t, cfg.h, cfg.w}, std::move(vol)));

  std::string name = ex.queried_archetype >= 0 ? kNames[ex.queried_archetype].full : "";
  ex.question.parse = template_parse(ex.tmpl, name);
  ex.question.token_ids = template_token_ids(ex.tmpl, ex.queried_archetype);
  int lq = static_cast<int>(ex.question.token_ids.size());
  std::vector<double> emb(static_cast<size_t>(lq) * cfg.d);
  for (int i = 0; i < lq; ++i) {
    const double* src = vocab_emb.data().data() +
                        static_cast<size_t>(ex.question.token_ids[i]) * cfg.d;
    std::copy(src, src + cfg.d, emb.begin() + static_cast<size_t>(i) * cfg.d);
  }
  ex.question.embeddings = Tensor::from_data({lq, cfg.d}, std::move(emb));
  ex.question.adjacency = reindex_for_subwords(ex.question.parse, 0);
  ex.question.validate();
  return ex;
}

}  // namespace

TaskDataset generate_task(const SyntheticTaskConfig& cfg) {
  cfg.validate();
  TaskDataset ds;
  ds.cfg = cfg;
  for (int i = 0; i < cfg.n_archetypes; ++i) ds.archetype_names.push_back(kNames[i].full);
  ds.subword_vocab = {"which", "event", "occur", "red", "first", "last", "before", "after"};
  for (int i = 0; i < cfg.n_archetypes; ++i) {
    ds.subword_vocab.push_back(kNames[i].head);
    ds.subword_vocab.push_back(kNames[i].tail);
  }

  Rng sig_rng(Rng::derive(cfg.seed, 0));
  ds.signatures = draw_signatures(cfg, sig_rng);

  Rng emb_rng(Rng::derive(cfg.seed, 1));
  int vocab = static_cast<int>(ds.subword_vocab.size());
  std::vector<double> emb(static_cast<size_t>(vocab) * cfg.d);
  for (double& x : emb) x = emb_rng.normal();
  ds.embeddings = Tensor::from_data({vocab, cfg.d}, std::move(emb));

  Rng train_rng(Rng::derive(cfg.seed, 2));
  for (int i = 0; i < cfg.n_train; ++i)
    ds.train.push_back(make_example(cfg, ds.signatures, ds.embeddings,
                                    i % cfg.n_archetypes, train_rng));
  Rng test_rng(Rng::derive(cfg.seed, 3));
  for (int i = 0; i < cfg.n_test; ++i)
    ds.test.push_back(make_example(cfg, ds.signatures, ds.embeddings,
                                   i % cfg.n_archetypes, test_rng));
  return ds;
}

namespace {

std::vector<LabeledExample> to_labeled(const std::vector<TaskExample>& xs) {
  std::vector<LabeledExample> out;
  out.reserve(xs.size());
  for (const TaskExample& x : xs) out.push_back({x.video, x.question, x.label});
  return out;
}

}  // namespace

std::vector<LabeledExample> TaskDataset::train_examples() const { return to_labeled(train); }
std::vector<LabeledExample> TaskDataset::test_examples() const { return to_labeled(test); }

int recompute_answer(const TaskExample& ex) {
  if (ex.events.size() < 2) fail("recompute_answer: fewer than 2 events");
  std::vector<PlantedEvent> evs = ex.events;
  std::sort(evs.begin(), evs.end(),
            [](const PlantedEvent& a, const PlantedEvent& b) { return a.t0 < b.t0; });
  switch (ex.tmpl) {
    case QuestionTemplate::First: return evs.front().archetype;
    case QuestionTemplate::Last: return evs.back().archetype;
    case QuestionTemplate::Before:
    case QuestionTemplate::After: {
      int idx = -1;
      for (size_t i = 0; i < evs.size(); ++i)
        if (evs[i].archetype == ex.queried_archetype) idx = static_cast<int>(i);
      if (idx < 0) fail("recompute_answer: queried archetype not planted");
      if (ex.tmpl == QuestionTemplate::Before) {
        if (idx == 0) fail("recompute_answer: nothing before the first event");
        return evs[idx - 1].archetype;
      }
      if (idx + 1 == static_cast<int>(evs.size()))
        fail("recompute_answer: nothing after the last event");
      return evs[idx + 1].archetype;
    }
  }
  fail("recompute_answer: bad template");
}

}  // namespace dsr
