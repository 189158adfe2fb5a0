#pragma once

#include <vector>

#include "hrt/tensor.hpp"

namespace hrt::num {

// Adaptive-moment optimizer state for one ordered parameter list. The
// accumulators are created lazily on the first step so a default-constructed
// state can be attached to any parameter set.
struct OptimizerState {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m, v;
};

// One update: params[i] -= lr * mhat / (sqrt(vhat) + eps), with bias
// correction. grads must align one-to-one with params.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               OptimizerState& state);

}  // namespace hrt::num
