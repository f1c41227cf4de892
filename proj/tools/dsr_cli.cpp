#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsr/experiment.hpp"
#include "dsr/memory_model.hpp"
#include "dsr/model.hpp"
#include "dsr/selfcheck.hpp"
#include "dsr/serialize.hpp"
#include "dsr/synthetic.hpp"

namespace {

using dsr::fail;

// shared task / training options; a key=value config file fills them first,
// command-line flags override
struct CommonOpts {
  std::string config_file;
  dsr::SyntheticTaskConfig task;
  dsr::TrainConfig train;
  std::string strategy = "dense";
  std::string reg = "so";
  double lambda = 0.01;
  int n_clips = 4;
  std::uint64_t model_seed = 7;
};

int to_int(const std::string& v, const std::string& key) {
  try {
    size_t used = 0;
    int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail("config key '" + key + "': '" + v + "' is not an integer");
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail("config key '" + key + "': '" + v + "' is not a number");
  }
}

std::uint64_t to_u64(const std::string& v, const std::string& key) {
  try {
    size_t used = 0;
    unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail("config key '" + key + "': '" + v + "' is not an unsigned integer");
  }
}

void apply_kv(CommonOpts& o, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, val] : kv) {
    if (key == "t") o.task.t = to_int(val, key);
    else if (key == "h") o.task.h = to_int(val, key);
    else if (key == "w") o.task.w = to_int(val, key);
    else if (key == "d") o.task.d = to_int(val, key);
    else if (key == "archetypes") o.task.n_archetypes = to_int(val, key);
    else if (key == "events") o.task.events_per_video = to_int(val, key);
    else if (key == "event_duration") o.task.event_duration = to_int(val, key);
    else if (key == "event_extent") o.task.event_extent = to_int(val, key);
    else if (key == "event_amplitude") o.task.event_amplitude = to_double(val, key);
    else if (key == "noise_std") o.task.noise_std = to_double(val, key);
    else if (key == "train_size") o.task.n_train = to_int(val, key);
    else if (key == "test_size") o.task.n_test = to_int(val, key);
    else if (key == "task_seed") o.task.seed = to_u64(val, key);
    else if (key == "epochs") o.train.epochs = to_int(val, key);
    else if (key == "batch_size") o.train.batch_size = to_int(val, key);
    else if (key == "lr") o.train.optim.lr = to_double(val, key);
    else if (key == "weight_decay") o.train.optim.weight_decay = to_double(val, key);
    else if (key == "strategy") o.strategy = val;
    else if (key == "reg") o.reg = val;
    else if (key == "lambda") o.lambda = to_double(val, key);
    else if (key == "clips") o.n_clips = to_int(val, key);
    else if (key == "model_seed") o.model_seed = to_u64(val, key);
    else fail("unknown config key '" + key + "'");
  }
}

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_file, "key=value configuration file");
  cmd->add_option("--frames,-t", o.task.t, "frames per video");
  cmd->add_option("--height", o.task.h, "spatial grid height");
  cmd->add_option("--width", o.task.w, "spatial grid width");
  cmd->add_option("--channels", o.task.d, "feature channels (must match model width)");
  cmd->add_option("--archetypes", o.task.n_archetypes, "event archetype count");
  cmd->add_option("--events", o.task.events_per_video, "events planted per video");
  cmd->add_option("--noise", o.task.noise_std, "background noise level");
  cmd->add_option("--amplitude", o.task.event_amplitude, "event signature scale");
  cmd->add_option("--train-size", o.task.n_train, "training examples");
  cmd->add_option("--test-size", o.task.n_test, "test examples");
  cmd->add_option("--task-seed", o.task.seed, "dataset seed");
  cmd->add_option("--epochs", o.train.epochs, "training epochs");
  cmd->add_option("--batch", o.train.batch_size, "batch size");
  cmd->add_option("--lr", o.train.optim.lr, "peak learning rate");
  cmd->add_option("--weight-decay", o.train.optim.weight_decay, "decoupled weight decay");
  cmd->add_option("--strategy", o.strategy, "dense | sparse | uniform");
  cmd->add_option("--reg", o.reg, "none | so | mcr | contrastive");
  cmd->add_option("--lambda", o.lambda, "regularizer weight");
  cmd->add_option("--clips", o.n_clips, "sparse clip count");
  cmd->add_option("--model-seed", o.model_seed, "parameter init seed");
}

void finalize(CommonOpts& o, CLI::App* cmd) {
  // config file first, then explicit flags on top
  if (o.config_file.empty()) return;
  CommonOpts from_file;
  from_file.config_file = o.config_file;
  apply_kv(from_file, dsr::parse_kv_file(o.config_file));
  // flags the user did not pass fall back to the file values
  auto keep = [&](const std::string& flag) { return cmd->count(flag) > 0; };
  CommonOpts merged = from_file;
  if (keep("--frames")) merged.task.t = o.task.t;
  if (keep("--height")) merged.task.h = o.task.h;
  if (keep("--width")) merged.task.w = o.task.w;
  if (keep("--channels")) merged.task.d = o.task.d;
  if (keep("--archetypes")) merged.task.n_archetypes = o.task.n_archetypes;
  if (keep("--events")) merged.task.events_per_video = o.task.events_per_video;
  if (keep("--noise")) merged.task.noise_std = o.task.noise_std;
  if (keep("--amplitude")) merged.task.event_amplitude = o.task.event_amplitude;
  if (keep("--train-size")) merged.task.n_train = o.task.n_train;
  if (keep("--test-size")) merged.task.n_test = o.task.n_test;
  if (keep("--task-seed")) merged.task.seed = o.task.seed;
  if (keep("--epochs")) merged.train.epochs = o.train.epochs;
  if (keep("--batch")) merged.train.batch_size = o.train.batch_size;
  if (keep("--lr")) merged.train.optim.lr = o.train.optim.lr;
  if (keep("--weight-decay")) merged.train.optim.weight_decay = o.train.optim.weight_decay;
  if (keep("--strategy")) merged.strategy = o.strategy;
  if (keep("--reg")) merged.reg = o.reg;
  if (keep("--lambda")) merged.lambda = o.lambda;
  if (keep("--clips")) merged.n_clips = o.n_clips;
  if (keep("--model-seed")) merged.model_seed = o.model_seed;
  o = merged;
}

dsr::ModelConfig model_config(const CommonOpts& o) {
  dsr::ModelConfig mc = dsr::ModelConfig::desk(o.task.n_archetypes);
  mc.strategy = dsr::strategy_from_string(o.strategy);
  mc.reg.kind = dsr::reg_kind_from_string(o.reg);
  mc.reg.lambda = o.lambda;
  mc.sampler.reg = mc.reg;
  mc.n_clips = o.n_clips;
  mc.init_seed = o.model_seed;
  return mc;
}

dsr::StrategySpec parse_strategy_item(const std::string& item, const CommonOpts& o) {
  dsr::StrategySpec s;
  s.name = item;
  s.n_clips = o.n_clips;
  s.reg.kind = dsr::RegKind::None;
  if (item == "dense" || item == "dense-so") {
    s.strategy = dsr::Strategy::DeformableDense;
    s.reg.kind = item == "dense" ? dsr::reg_kind_from_string(o.reg) : dsr::RegKind::SO;
    s.reg.lambda = o.lambda;
  } else if (item == "dense-none" || item == "dense-mcr" || item == "dense-contrastive") {
    s.strategy = dsr::Strategy::DeformableDense;
    s.reg.kind = dsr::reg_kind_from_string(item.substr(6));
    s.reg.lambda = o.lambda;
  } else if (item == "sparse") {
    s.strategy = dsr::Strategy::SparseRandom;
  } else if (item.rfind("sparse-", 0) == 0) {
    s.strategy = dsr::Strategy::SparseRandom;
    s.n_clips = to_int(item.substr(7), "strategies");
  } else if (item == "uniform") {
    s.strategy = dsr::Strategy::UniformDense;
  } else {
    fail("unknown strategy '" + item + "' in --strategies");
  }
  return s;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deformable sampling and reasoning toolkit"};
  app.require_subcommand(1);

  CommonOpts gen_o, train_o, eval_o, dump_o;
  std::string gen_out = "dataset.bin";
  auto* gen = app.add_subcommand("gen", "generate a synthetic QA dataset");
  add_common_flags(gen, gen_o);
  gen->add_option("--out", gen_out, "output dataset file");

  std::string train_data, train_ckpt = "model.ckpt", train_metrics;
  auto* train = app.add_subcommand("train", "train a model");
  add_common_flags(train, train_o);
  train->add_option("--data", train_data, "dataset file (generated on the fly if omitted)");
  train->add_option("--out", train_ckpt, "checkpoint output");
  train->add_option("--metrics", train_metrics, "per-step metrics JSONL output");

  std::string eval_data, eval_ckpt;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common_flags(eval, eval_o);
  eval->add_option("--data", eval_data, "dataset file (generated on the fly if omitted)");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint to evaluate")->required();

  CommonOpts sweep_o;
  std::string sweep_out = "report.json", sweep_strategies = "dense,sparse";
  int sweep_seeds = 5, sweep_workers = 1;
  std::uint64_t sweep_master = 2024;
  bool sweep_matched = false;
  auto* sweep = app.add_subcommand("sweep", "strategy comparison sweep");
  add_common_flags(sweep, sweep_o);
  sweep->add_option("--seeds", sweep_seeds, "paired seeds per strategy");
  sweep->add_option("--master-seed", sweep_master, "seed the per-trial streams derive from");
  sweep->add_option("--strategies", sweep_strategies,
                    "comma list: dense, dense-so, dense-none, dense-mcr, dense-contrastive, "
                    "sparse, sparse-N, uniform");
  sweep->add_option("--out", sweep_out, "report JSON output");
  sweep->add_flag("--matched-budget", sweep_matched,
                  "equalize visual token budgets across strategies");
  sweep->add_option("--workers", sweep_workers, "parallel trial workers");

  std::string mem_strategy;
  int mem_frames = 32, mem_h = 7, mem_w = 7, mem_qlen = 100, mem_queries = 25, mem_clips = 4;
  double mem_budget = 0.0;
  auto* mem = app.add_subcommand("memmodel", "analytic attention-cost model");
  mem->add_option("--strategy", mem_strategy, "baseline | sparse | dsr (all if omitted)");
  mem->add_option("--frames", mem_frames, "frame count T");
  mem->add_option("--height", mem_h, "spatial grid height");
  mem->add_option("--width", mem_w, "spatial grid width");
  mem->add_option("--qlen", mem_qlen, "question token count");
  mem->add_option("--queries", mem_queries, "learnable query count");
  mem->add_option("--clips", mem_clips, "sparse clip count");
  mem->add_option("--budget", mem_budget, "cost budget (default: calibrated)");

  std::string dump_out = "samples.jsonl", dump_ckpt;
  int dump_example = 0;
  auto* dump = app.add_subcommand("dump-samples", "dump sampled points of one forward pass");
  add_common_flags(dump, dump_o);
  dump->add_option("--out", dump_out, "JSONL output");
  dump->add_option("--ckpt", dump_ckpt, "checkpoint to load (fresh init if omitted)");
  dump->add_option("--example", dump_example, "test example index");

  auto* check = app.add_subcommand("check", "run the verification battery");
  (void)check;

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      finalize(gen_o, gen);
      dsr::TaskDataset ds = dsr::generate_task(gen_o.task);
      dsr::save_dataset(gen_out, ds);
      std::cout << "wrote " << gen_out << " train=" << ds.train.size()
                << " test=" << ds.test.size() << " vocab=" << ds.subword_vocab.size() << "\n";
    } else if (train->parsed()) {
      finalize(train_o, train);
      dsr::TaskDataset ds = train_data.empty() ? dsr::generate_task(train_o.task)
                                               : dsr::load_dataset(train_data);
      train_o.task = ds.cfg;
      dsr::ModelConfig mc = model_config(train_o);
      dsr::QaModel model = dsr::QaModel::make(mc);
      dsr::TrainResult res = dsr::train_model(model, ds.train_examples(), train_o.train);
      dsr::save_checkpoint(train_ckpt, model.store, mc.hash());
      if (!train_metrics.empty()) dsr::write_metrics_jsonl(train_metrics, res.steps);
      double acc = dsr::evaluate_accuracy(model, ds.test_examples());
      std::cout << "final_loss=" << res.final_loss << " test_accuracy=" << acc << " ckpt="
                << train_ckpt << "\n";
    } else if (eval->parsed()) {
      finalize(eval_o, eval);
      dsr::TaskDataset ds = eval_data.empty() ? dsr::generate_task(eval_o.task)
                                              : dsr::load_dataset(eval_data);
      eval_o.task = ds.cfg;
      dsr::ModelConfig mc = model_config(eval_o);
      dsr::QaModel model = dsr::QaModel::make(mc);
      dsr::load_checkpoint(eval_ckpt, model.store, mc.hash());
      double acc = dsr::evaluate_accuracy(model, ds.test_examples());
      std::cout << "test_accuracy=" << acc << " examples=" << ds.test.size() << "\n";
    } else if (sweep->parsed()) {
      finalize(sweep_o, sweep);
      dsr::ExperimentConfig ec;
      ec.task = sweep_o.task;
      ec.n_seeds = sweep_seeds;
      ec.master_seed = sweep_master;
      ec.train = sweep_o.train;
      ec.matched_budget = sweep_matched;
      ec.n_workers = sweep_workers;
      for (const std::string& item : split_csv(sweep_strategies))
        ec.strategies.push_back(parse_strategy_item(item, sweep_o));
      dsr::ExperimentReport rep = dsr::run_experiment(ec);
      dsr::write_report(sweep_out, ec, rep);
      for (const dsr::StrategySpec& s : ec.strategies) {
        int converged = 0;
        for (const dsr::TrialResult* t : rep.trials_for(s.name))
          if (!t->diverged) ++converged;
        std::cout << s.name << " converged=" << converged << "/" << ec.n_seeds;
        if (converged > 0) std::cout << " mean_test_accuracy=" << rep.mean_accuracy(s.name);
        std::cout << "\n";
      }
      std::cout << "report=" << sweep_out << "\n";
    } else if (mem->parsed()) {
      double budget = mem_budget > 0.0 ? mem_budget : dsr::calibrated_budget(mem_h, mem_w, mem_qlen);
      auto print_one = [&](dsr::CostStrategy s) {
        dsr::CostModelInput in;
        in.strategy = s;
        in.t = mem_frames;
        in.h = mem_h;
        in.w = mem_w;
        in.l_t = mem_qlen;
        in.n_q = mem_queries;
        in.n_c = mem_clips;
        dsr::CostModelOutput out = dsr::memory_cost(in);
        std::cout << dsr::cost_strategy_to_string(s) << " sequence=" << out.sequence
                  << " cost=" << out.cost << " max_frames="
                  << dsr::max_frames_under_budget(s, budget, mem_h, mem_w, mem_qlen, mem_queries)
                  << "\n";
      };
      if (mem_strategy.empty()) {
        std::cout << "budget=" << budget << "\n";
        print_one(dsr::CostStrategy::Baseline);
        print_one(dsr::CostStrategy::Sparse);
        print_one(dsr::CostStrategy::Dsr);
      } else {
        print_one(dsr::cost_strategy_from_string(mem_strategy));
      }
    } else if (dump->parsed()) {
      finalize(dump_o, dump);
      dsr::TaskDataset ds = dsr::generate_task(dump_o.task);
      dump_o.task = ds.cfg;
      dsr::ModelConfig mc = model_config(dump_o);
      if (mc.strategy != dsr::Strategy::DeformableDense)
        dsr::fail("dump-samples: only the dense strategy produces sampling records");
      dsr::QaModel model = dsr::QaModel::make(mc);
      if (!dump_ckpt.empty()) dsr::load_checkpoint(dump_ckpt, model.store, mc.hash());
      if (dump_example < 0 || dump_example >= static_cast<int>(ds.test.size()))
        dsr::fail("dump-samples: example index out of range");
      dsr::NoGradGuard ng;
      dsr::QaOutput out =
          model.qa_forward(ds.test[dump_example].video, ds.test[dump_example].question);
      dsr::write_sample_dump(dump_out, out.tokens);
      std::cout << "wrote " << dump_out << "\n";
    } else if (check->parsed()) {
      int failures = dsr::run_selfcheck(std::cout);
      return failures == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
