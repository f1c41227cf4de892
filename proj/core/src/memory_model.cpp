#include "dsr/memory_model.hpp"

#include "dsr/common.hpp"

namespace dsr {

CostStrategy cost_strategy_from_string(const std::string& s) {
  if (s == "baseline" || s == "uniform") return CostStrategy::Baseline;
  if (s == "sparse") return CostStrategy::Sparse;
  if (s == "dsr" || s == "dense") return CostStrategy::Dsr;
  fail("unknown cost strategy '" + s + "' (expected baseline|sparse|dsr)");
}

std::string cost_strategy_to_string(CostStrategy s) {
  switch (s) {
    case CostStrategy::Baseline: return "baseline";
    case CostStrategy::Sparse: return "sparse";
    case CostStrategy::Dsr: return "dsr";
  }
  fail("cost_strategy_to_string: bad enum");
}

void CostModelInput::validate() const {
  if (t < 1 || h < 1 || w < 1 || l_t < 1 || n_q < 1 || n_c < 1)
    fail("CostModelInput: all fields must be positive");
}

CostModelOutput memory_cost(const CostModelInput& in) {
  in.validate();
  CostModelOutput out;
  switch (in.strategy) {
    case CostStrategy::Baseline: {
      out.sequence = in.t * in.h * in.w + in.l_t;
      out.cost = static_cast<double>(out.sequence) * out.sequence;
      break;
    }
    case CostStrategy::Sparse: {
      out.sequence = in.h * in.w + in.l_t;  // per clip; clips run independently
      out.cost = static_cast<double>(in.n_c) * out.sequence * out.sequence;
      break;
    }
    case CostStrategy::Dsr: {
      out.sequence = in.n_q + in.t + in.l_t;
      out.cost = static_cast<double>(out.sequence) * out.sequence;
      break;
    }
  }
  return out;
}

double strategy_cost_at(CostStrategy s, double t, int h, int w, int l_t, int n_q) {
  if (t <= 0.0) fail("strategy_cost_at: t must be positive");
  switch (s) {
    case CostStrategy::Baseline: {
      double seq = t * h * w + l_t;
      return seq * seq;
    }
    case CostStrategy::Sparse: {
      double seq = h * w + l_t;
      return (t / 2.0) * seq * seq;
    }
    case CostStrategy::Dsr: {
      double seq = n_q + t + l_t;
      return seq * seq;
    }
  }
  fail("strategy_cost_at: bad enum");
}

double calibrated_budget(int h, int w, int l_t) {
  // exactly the baseline cost at 60 frames; 61 frames then exceed it
  return strategy_cost_at(CostStrategy::Baseline, 60.0, h, w, l_t, 1);
}

int max_frames_under_budget(CostStrategy s, double budget, int h, int w, int l_t, int n_q) {
  if (strategy_cost_at(s, 1.0, h, w, l_t, n_q) > budget) return 0;
  int t = 1;
  while (t < 100000000 && strategy_cost_at(s, t + 1.0, h, w, l_t, n_q) <= budget) ++t;
  return t;
}

}  // namespace dsr
