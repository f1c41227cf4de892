#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsr/model.hpp"

namespace dsr {

// Compositional temporal-ordering QA over synthetic feature volumes. Each
// video plants `events_per_video` distinct event signatures (well-separated
// unit vectors, pairwise |cosine| < 0.1) into temporally disjoint blocks over
// background noise. Questions ask which event came first / last / immediately
// before / immediately after a named event; answers are archetype names.
struct SyntheticTaskConfig {
  int t = 32, h = 4, w = 4, d = 64;
  int n_archetypes = 6;
  int events_per_video = 2;
  int event_duration = 4;
  int event_extent = 2;          // spatial block side
  double event_amplitude = 2.0;  // signature scale when planted
  double noise_std = 0.1;
  int n_train = 160;
  int n_test = 96;
  std::uint64_t seed = 1;
  void validate() const;
};

enum class QuestionTemplate { First, Last, Before, After };

std::string template_to_string(QuestionTemplate t);

struct PlantedEvent {
  int archetype = 0;
  int t0 = 0, duration = 0;
  int y0 = 0, x0 = 0, extent = 0;
};

struct TaskExample {
  FeatureVolume video;
  QuestionRecord question;
  int label = 0;
  // ground truth kept for round-trip verification
  std::vector<PlantedEvent> events;  // in temporal order
  QuestionTemplate tmpl = QuestionTemplate::First;
  int queried_archetype = -1;  // -1 for First/Last
};

struct TaskDataset {
  SyntheticTaskConfig cfg;
  std::vector<std::string> archetype_names;
  std::vector<std::string> subword_vocab;
  Tensor signatures;  // [n_archetypes, d] unit rows
  Tensor embeddings;  // [vocab, d] fixed subword features
  std::vector<TaskExample> train, test;

  std::vector<LabeledExample> train_examples() const;
  std::vector<LabeledExample> test_examples() const;
};

// Deterministic under cfg.seed (independent streams for signatures, vocab
// features, train split, test split). Answer classes are assigned round-robin
// so the histogram is balanced to within one example per class.
TaskDataset generate_task(const SyntheticTaskConfig& cfg);

// Recomputes the answer from the planted-event metadata alone; must equal the
// stored label for every generated example.
int recompute_answer(const TaskExample& ex);

}  // namespace dsr
