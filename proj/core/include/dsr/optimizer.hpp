#pragma once

#include <vector>

#include "dsr/params.hpp"

namespace dsr {

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // schedule: linear warmup to `lr` over warmup_steps, then linear decay to 0
  // at total_steps; total_steps == 0 disables the schedule (constant lr)
  int warmup_steps = 0;
  int total_steps = 0;
  void validate() const;
};

// Adam with decoupled weight decay. Per-parameter lr multipliers from the
// ParamStore scale the whole update (the sampler's offset and reference
// projections run at 0.1x). Decay skips parameters flagged no-decay (biases,
// layer-norm terms).
class AdamW {
 public:
  AdamW(const ParamStore& store, OptimConfig cfg);

  double lr_at(int step) const;  // step is 1-based
  int steps_taken() const { return step_; }

  // consumes the accumulated gradients; missing gradients count as zero
  void step(ParamStore& store);

 private:
  OptimConfig cfg_;
  int step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace dsr
