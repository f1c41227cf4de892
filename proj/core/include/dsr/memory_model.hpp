#pragma once

#include <string>

namespace dsr {

// Analytic quadratic-attention cost model for the three sampling strategies.
// Baseline flattens every frame: (T*H*W + L_t)^2. Sparse processes N_c clips
// independently: N_c * (H*W + L_t)^2. The deformable-dense pipeline attends
// over N_q sampled tokens plus T global tokens: (N_q + T + L_t)^2. Costs are
// unitless; one proportionality constant (the budget) is calibrated against
// a fixed anchor and shared across strategies.
enum class CostStrategy { Baseline, Sparse, Dsr };

CostStrategy cost_strategy_from_string(const std::string& s);
std::string cost_strategy_to_string(CostStrategy s);

struct CostModelInput {
  CostStrategy strategy = CostStrategy::Dsr;
  int t = 32;     // frames
  int h = 7, w = 7;
  int l_t = 100;  // question tokens
  int n_q = 25;   // learnable queries (dsr only)
  int n_c = 4;    // clips (sparse only)
  void validate() const;
};

struct CostModelOutput {
  int sequence = 0;  // transformer sequence length of one forward pass
  double cost = 0.0; // summed quadratic attention cost
};

CostModelOutput memory_cost(const CostModelInput& in);

// cost as a function of frame count with the sparse clip count tied to the
// 2-frames-per-clip convention, N_c = t/2 kept real-valued so the function is
// strictly increasing in t for every strategy
double strategy_cost_at(CostStrategy s, double t, int h, int w, int l_t, int n_q);

// budget at which the baseline strategy tops out at exactly 60 frames
double calibrated_budget(int h = 7, int w = 7, int l_t = 100);

// largest integer frame count whose cost stays within the budget
int max_frames_under_budget(CostStrategy s, double budget, int h = 7, int w = 7, int l_t = 100,
                            int n_q = 25);

}  // namespace dsr
