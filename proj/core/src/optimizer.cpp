#include "dsr/optimizer.hpp"

#include <cmath>

namespace dsr {

void OptimConfig::validate() const {
  if (lr < 0.0) fail("OptimConfig: lr must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    fail("OptimConfig: betas must lie in [0,1)");
  if (eps <= 0.0) fail("OptimConfig: eps must be > 0");
  if (weight_decay < 0.0) fail("OptimConfig: weight_decay must be >= 0");
  if (warmup_steps < 0 || total_steps < 0) fail("OptimConfig: negative schedule");
  if (total_steps > 0 && warmup_steps >= total_steps)
    fail("OptimConfig: warmup_steps must be < total_steps");
}

AdamW::AdamW(const ParamStore& store, OptimConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  for (const Parameter& p : store.all()) {
    m_.emplace_back(p.value.numel(), 0.0);
    v_.emplace_back(p.value.numel(), 0.0);
  }
}

double AdamW::lr_at(int step) const {
  if (cfg_.total_steps == 0) return cfg_.lr;
  if (step <= cfg_.warmup_steps && cfg_.warmup_steps > 0)
    return cfg_.lr * static_cast<double>(step) / cfg_.warmup_steps;
  if (step >= cfg_.total_steps) return 0.0;
  return cfg_.lr * static_cast<double>(cfg_.total_steps - step) /
         (cfg_.total_steps - cfg_.warmup_steps);
}

void AdamW::step(ParamStore& store) {
  auto& params = store.all();
  if (params.size() != m_.size())
    fail("AdamW::step: parameter count changed after construction");
  ++step_;
  double lr = lr_at(step_);
  double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
  double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
  bool f32 = precision() == Precision::F32;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = params[pi];
    std::vector<double>& theta = p.value.mutable_data();
    const std::vector<double>* grad = p.value.has_grad() ? &p.value.grad() : nullptr;
    double step_lr = lr * p.lr_mult;
    double wd = p.weight_decay ? cfg_.weight_decay : 0.0;
    for (size_t i = 0; i < theta.size(); ++i) {
      double g = grad ? (*grad)[i] : 0.0;
      m_[pi][i] = cfg_.beta1 * m_[pi][i] + (1.0 - cfg_.beta1) * g;
      v_[pi][i] = cfg_.beta2 * v_[pi][i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m_[pi][i] / bc1;
      double vhat = v_[pi][i] / bc2;
      double next = theta[i] - step_lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + wd * theta[i]);
      if (f32) {
        next = static_cast<double>(static_cast<float>(next));
        m_[pi][i] = static_cast<double>(static_cast<float>(m_[pi][i]));
        v_[pi][i] = static_cast<double>(static_cast<float>(v_[pi][i]));
      }
      theta[i] = next;
    }
  }
}

}  // namespace dsr
