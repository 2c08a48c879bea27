#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "medkg/tensor.hpp"

namespace medkg {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_input;      // name of the tensor holding the worst coordinate
  std::size_t worst_coord = 0;  // flat index within that tensor
};

// Validates the recorded backward rules of `f` against central differences.
//
// `f` must rebuild its computation from scratch on every call and produce a
// scalar loss; `inputs` are the named leaf tensors it closes over (all with
// requires_grad). Each coordinate is nudged by ±eps in place, so `f` has to
// read the same buffers each time. Runs entirely in 64-bit mode.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& inputs,
                           double eps = 1e-4);

}  // namespace medkg
