#include "hrt/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace hrt::num {

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               OptimizerState& state) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->size(), 0.0);
      state.v[i].assign(params[i]->size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state/params count mismatch");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (g.shape != p.shape) throw std::invalid_argument("adam_step: gradient shape mismatch");
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g.values[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g.values[j] * g.values[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p.values[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace hrt::num
