#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsr/model.hpp"
#include "dsr/synthetic.hpp"

namespace dsr {

// One arm of a strategy sweep. The regularizer settings only matter for the
// deformable-dense pipeline, the clip count only for sparse-random.
struct StrategySpec {
  std::string name;
  Strategy strategy = Strategy::DeformableDense;
  int n_clips = 4;
  RegConfig reg;
};

struct ExperimentConfig {
  SyntheticTaskConfig task;  // per-trial seed is filled in by the sweep
  // architectural template for every trial; the sweep stamps answer_vocab,
  // strategy, regularizer, clip count, and init seed per trial, so only the
  // sizing fields matter here (width must match the task channel count)
  ModelConfig model = ModelConfig::desk(6);
  std::vector<StrategySpec> strategies;
  int n_seeds = 5;
  std::uint64_t master_seed = 2024;
  TrainConfig train;
  // resize sparse clip counts so every strategy feeds the transformer the
  // same visual token budget per forward (the unmatched setting keeps the
  // configured clip counts)
  bool matched_budget = false;
  int n_workers = 1;         // trials run in parallel; results keep seed order
  int metric_examples = 8;   // test examples averaged for diversity metrics
  void validate() const;

  // dense (SO), dense (no reg), sparse 1 clip, sparse 4 clips; desk scale
  static ExperimentConfig defaults();
};

struct TrialResult {
  std::string strategy;
  int seed_index = 0;
  std::uint64_t task_seed = 0, model_seed = 0;
  bool diverged = false;
  std::string error;  // divergence diagnostic
  double final_train_loss = 0.0;
  double train_accuracy = 0.0;  // last-epoch mean batch accuracy
  double test_accuracy = 0.0;
  bool has_diversity = false;   // dense trials only
  double mean_abs_offdiag_gram = 0.0;
  double min_pairwise_location_distance = 0.0;
  int n_clips_used = 0;
  double seconds = 0.0;
};

struct ExperimentReport {
  std::vector<TrialResult> trials;

  std::vector<const TrialResult*> trials_for(const std::string& strategy) const;
  double mean_accuracy(const std::string& strategy) const;  // converged trials
  // paired per-seed comparison: seeds where both arms converged and a's test
  // accuracy is strictly higher / strictly lower than b's
  int wins(const std::string& a, const std::string& b) const;
  int losses(const std::string& a, const std::string& b) const;
};

// Trains and evaluates every (strategy, seed) cell. Each seed index s maps to
// task seed derive(master, 2s) and model seed derive(master, 2s+1), shared
// across strategies so comparisons are paired. A trial that throws is
// recorded as diverged; the sweep continues.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

// single structured report: config echo, per-trial records, per-strategy
// means (JSON, one file)
std::string report_to_json(const ExperimentConfig& cfg, const ExperimentReport& rep);
void write_report(const std::string& path, const ExperimentConfig& cfg,
                  const ExperimentReport& rep);

}  // namespace dsr
