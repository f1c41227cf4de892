#include "dsr/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <set>
#include <thread>

#include <json.hpp>

#include "dsr/serialize.hpp"

namespace dsr {

void ExperimentConfig::validate() const {
  task.validate();
  if (strategies.empty()) fail("ExperimentConfig: no strategies");
  std::set<std::string> names;
  for (const StrategySpec& s : strategies) {
    if (s.name.empty()) fail("ExperimentConfig: unnamed strategy");
    if (!names.insert(s.name).second)
      fail("ExperimentConfig: duplicate strategy name '" + s.name + "'");
    if (s.strategy == Strategy::SparseRandom && s.n_clips < 1)
      fail("ExperimentConfig: sparse strategy '" + s.name + "' needs n_clips >= 1");
    s.reg.validate();
  }
  if (n_seeds < 1) fail("ExperimentConfig: n_seeds must be >= 1");
  if (n_workers < 1) fail("ExperimentConfig: n_workers must be >= 1");
  if (metric_examples < 1) fail("ExperimentConfig: metric_examples must be >= 1");
  if (train.epochs < 1 || train.batch_size < 1) fail("ExperimentConfig: bad train settings");
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  StrategySpec dense_so{"dense-so", Strategy::DeformableDense, 4, RegConfig{}};
  StrategySpec dense_none = dense_so;
  dense_none.name = "dense-none";
  dense_none.reg.kind = RegKind::None;
  StrategySpec sparse1{"sparse-1", Strategy::SparseRandom, 1, RegConfig{}};
  StrategySpec sparse4{"sparse-4", Strategy::SparseRandom, 4, RegConfig{}};
  c.strategies = {dense_so, dense_none, sparse1, sparse4};
  return c;
}

namespace {

int matched_clip_count(const SyntheticTaskConfig& task, const ModelConfig& model) {
  double dense_tokens = model.sampler.n_queries + (model.use_global ? task.t : 0);
  double per_clip = static_cast<double>(model.frames_per_clip) * task.h * task.w;
  int n = static_cast<int>(std::lround(dense_tokens / per_clip));
  return n < 1 ? 1 : n;
}

TrialResult run_trial(const ExperimentConfig& cfg, const StrategySpec& spec, int seed_index) {
  TrialResult r;
  r.strategy = spec.name;
  r.seed_index = seed_index;
  r.task_seed = Rng::derive(cfg.master_seed, 2 * static_cast<std::uint64_t>(seed_index));
  r.model_seed = Rng::derive(cfg.master_seed, 2 * static_cast<std::uint64_t>(seed_index) + 1);
  auto started = std::chrono::steady_clock::now();
  try {
    SyntheticTaskConfig task = cfg.task;
    task.seed = r.task_seed;
    TaskDataset ds = generate_task(task);

    ModelConfig mc = cfg.model;
    mc.answer_vocab = task.n_archetypes;
    if (task.d != mc.d)
      fail("run_trial: task channel width " + std::to_string(task.d) +
           " does not match the model width " + std::to_string(mc.d));
    mc.strategy = spec.strategy;
    mc.init_seed = r.model_seed;
    bool dense = spec.strategy == Strategy::DeformableDense;
    mc.reg = dense ? spec.reg : RegConfig{RegKind::None, 0.0, 0.5, 0.1, false};
    mc.sampler.reg = mc.reg;
    mc.n_clips = spec.n_clips;
    if (cfg.matched_budget && spec.strategy == Strategy::SparseRandom)
      mc.n_clips = matched_clip_count(task, mc);
    r.n_clips_used = spec.strategy == Strategy::SparseRandom ? mc.n_clips : 0;

    QaModel model = QaModel::make(mc);
    TrainConfig tc = cfg.train;
    tc.shuffle_seed = Rng::derive(r.model_seed, 101);
    tc.clip_seed = Rng::derive(r.model_seed, 202);
    std::vector<LabeledExample> train = ds.train_examples();
    TrainResult tr = train_model(model, train, tc);
    r.final_train_loss = tr.final_loss;
    int steps_per_epoch = (static_cast<int>(train.size()) + tc.batch_size - 1) / tc.batch_size;
    double acc = 0.0;
    for (size_t i = tr.steps.size() - steps_per_epoch; i < tr.steps.size(); ++i)
      acc += tr.steps[i].accuracy;
    r.train_accuracy = acc / steps_per_epoch;

    std::vector<LabeledExample> test = ds.test_examples();
    r.test_accuracy = evaluate_accuracy(model, test, Rng::derive(r.task_seed, 4242));

    if (dense) {
      NoGradGuard ng;
      int n = std::min<int>(cfg.metric_examples, static_cast<int>(test.size()));
      double gram = 0.0, dist = 0.0;
      for (int i = 0; i < n; ++i) {
        QaOutput out = model.qa_forward(test[i].video, test[i].question);
        DiversityMetrics dm = diversity_metrics(out.tokens);
        gram += dm.mean_abs_offdiag_gram;
        dist += dm.min_pairwise_location_distance;
      }
      r.has_diversity = true;
      r.mean_abs_offdiag_gram = gram / n;
      r.min_pairwise_location_distance = dist / n;
    }
  } catch (const std::exception& e) {
    r.diverged = true;
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  struct Cell {
    const StrategySpec* spec;
    int seed;
  };
  std::vector<Cell> cells;
  for (const StrategySpec& s : cfg.strategies)
    for (int seed = 0; seed < cfg.n_seeds; ++seed) cells.push_back({&s, seed});

  ExperimentReport rep;
  rep.trials.resize(cells.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      rep.trials[i] = run_trial(cfg, *cells[i].spec, cells[i].seed);
    }
  };
  int workers = std::min<int>(cfg.n_workers, static_cast<int>(cells.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return rep;
}

std::vector<const TrialResult*> ExperimentReport::trials_for(const std::string& strategy) const {
  std::vector<const TrialResult*> out;
  for (const TrialResult& t : trials)
    if (t.strategy == strategy) out.push_back(&t);
  return out;
}

double ExperimentReport::mean_accuracy(const std::string& strategy) const {
  double sum = 0.0;
  int n = 0;
  for (const TrialResult* t : trials_for(strategy))
    if (!t->diverged) {
      sum += t->test_accuracy;
      ++n;
    }
  if (n == 0) fail("mean_accuracy: no converged trials for '" + strategy + "'");
  return sum / n;
}

namespace {

const TrialResult* find_trial(const std::vector<const TrialResult*>& ts, int seed) {
  for (const TrialResult* t : ts)
    if (t->seed_index == seed) return t;
  return nullptr;
}

int count_paired(const ExperimentReport& rep, const std::string& a, const std::string& b,
                 bool strict_greater) {
  std::vector<const TrialResult*> ta = rep.trials_for(a), tb = rep.trials_for(b);
  int count = 0;
  for (const TrialResult* x : ta) {
    const TrialResult* y = find_trial(tb, x->seed_index);
    if (!y || x->diverged || y->diverged) continue;
    if (strict_greater ? x->test_accuracy > y->test_accuracy
                       : x->test_accuracy < y->test_accuracy)
      ++count;
  }
  return count;
}

}  // namespace

int ExperimentReport::wins(const std::string& a, const std::string& b) const {
  return count_paired(*this, a, b, true);
}

int ExperimentReport::losses(const std::string& a, const std::string& b) const {
  return count_paired(*this, a, b, false);
}

std::string report_to_json(const ExperimentConfig& cfg, const ExperimentReport& rep) {
  nlohmann::ordered_json j;
  j["format"] = "dsr-experiment-report";
  j["version"] = 1;
  nlohmann::ordered_json jc;
  jc["task"] = {{"t", cfg.task.t},
                {"h", cfg.task.h},
                {"w", cfg.task.w},
                {"d", cfg.task.d},
                {"n_archetypes", cfg.task.n_archetypes},
                {"events_per_video", cfg.task.events_per_video},
                {"event_duration", cfg.task.event_duration},
                {"event_extent", cfg.task.event_extent},
                {"event_amplitude", cfg.task.event_amplitude},
                {"noise_std", cfg.task.noise_std},
                {"n_train", cfg.task.n_train},
                {"n_test", cfg.task.n_test}};
  jc["model"] = {{"d", cfg.model.d},
                 {"n_layers", cfg.model.n_layers},
                 {"n_heads", cfg.model.n_heads},
                 {"intermediate", cfg.model.intermediate},
                 {"n_queries", cfg.model.sampler.n_queries},
                 {"sampler_heads", cfg.model.sampler.n_heads},
                 {"sampler_points", cfg.model.sampler.n_points},
                 {"sampler_layers", cfg.model.sampler.n_layers},
                 {"frames_per_clip", cfg.model.frames_per_clip}};
  jc["n_seeds"] = cfg.n_seeds;
  jc["master_seed"] = cfg.master_seed;
  jc["matched_budget"] = cfg.matched_budget;
  jc["train"] = {{"epochs", cfg.train.epochs},
                 {"batch_size", cfg.train.batch_size},
                 {"lr", cfg.train.optim.lr},
                 {"weight_decay", cfg.train.optim.weight_decay}};
  nlohmann::ordered_json js = nlohmann::ordered_json::array();
  for (const StrategySpec& s : cfg.strategies)
    js.push_back({{"name", s.name},
                  {"strategy", strategy_to_string(s.strategy)},
                  {"n_clips", s.n_clips},
                  {"reg", reg_kind_to_string(s.reg.kind)},
                  {"lambda", s.reg.lambda}});
  jc["strategies"] = js;
  j["config"] = jc;

  nlohmann::ordered_json jt = nlohmann::ordered_json::array();
  for (const TrialResult& t : rep.trials) {
    nlohmann::ordered_json e;
    e["strategy"] = t.strategy;
    e["seed_index"] = t.seed_index;
    e["task_seed"] = t.task_seed;
    e["model_seed"] = t.model_seed;
    e["diverged"] = t.diverged;
    if (t.diverged) e["error"] = t.error;
    e["final_train_loss"] = t.final_train_loss;
    e["train_accuracy"] = t.train_accuracy;
    e["test_accuracy"] = t.test_accuracy;
    if (t.has_diversity) {
      e["mean_abs_offdiag_gram"] = t.mean_abs_offdiag_gram;
      e["min_pairwise_location_distance"] = t.min_pairwise_location_distance;
    }
    if (t.n_clips_used > 0) e["n_clips_used"] = t.n_clips_used;
    // wall time stays off the report so identical runs serialize identically
    jt.push_back(e);
  }
  j["trials"] = jt;

  nlohmann::ordered_json jm = nlohmann::ordered_json::object();
  for (const StrategySpec& s : cfg.strategies) {
    int converged = 0;
    for (const TrialResult* t : rep.trials_for(s.name))
      if (!t->diverged) ++converged;
    nlohmann::ordered_json e;
    e["converged"] = converged;
    if (converged > 0) e["mean_test_accuracy"] = rep.mean_accuracy(s.name);
    jm[s.name] = e;
  }
  j["summary"] = jm;
  return j.dump(2) + "\n";
}

void write_report(const std::string& path, const ExperimentConfig& cfg,
                  const ExperimentReport& rep) {
  write_text_file(path, report_to_json(cfg, rep));
}

}  // namespace dsr
