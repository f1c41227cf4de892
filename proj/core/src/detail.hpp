#pragma once

#include <functional>

#include "dsr/tensor.hpp"

namespace dsr {

// shared between the op translation units, not part of the public surface
Tensor detail_make_result(Shape shape, std::vector<double> data, const char* op,
                          std::vector<Tensor> inputs,
                          std::function<void(const TensorImpl&)> bw);
void detail_ensure_grad(TensorImpl* t);

}  // namespace dsr
