#include "dpnse/optim.hpp"

#include "dpnse/errors.hpp"

namespace dpnse {

void optim_step(std::span<Tensor> params, OptimState& state) {
  if (!(state.learning_rate > 0.0)) throw usage_error("optim_step: learning rate must be > 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw usage_error("optim_step: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  if (state.momentum != 0.0 && state.velocity.size() != params.size()) {
    state.velocity.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i)
      state.velocity[i].assign(params[i].numel(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = params[i].grad();
    if (state.momentum != 0.0) {
      auto& v = state.velocity[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = state.momentum * v[j] + g[j];
        p[j] -= state.learning_rate * v[j];
      }
    } else {
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= state.learning_rate * g[j];
    }
  }
  ++state.step_count;
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace dpnse
