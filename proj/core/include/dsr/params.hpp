#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dsr/tensor.hpp"

namespace dsr {

struct Parameter {
  std::string name;
  Tensor value;
  double lr_mult = 1.0;     // per-parameter learning-rate scale
  bool weight_decay = true;  // decoupled decay applies only where true
};

// Flat registry of named leaf tensors. Iteration order is registration order,
// which keeps optimizer behaviour deterministic.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor value, double lr_mult = 1.0,
             bool weight_decay = true);

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  const Parameter& find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::int64_t total_size() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace dsr
