#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dpnse/tensor.hpp"

namespace dpnse {

/// Gradient descent with optional heavy-ball momentum:
///   v <- momentum * v + g;  p <- p - learning_rate * v
struct OptimState {
  double learning_rate = 0.01;
  double momentum = 0.0;
  std::vector<std::vector<double>> velocity;  // one buffer per parameter, lazily sized
  std::size_t step_count = 0;
};

/// Applies one update to every parameter. Throws usage_error if a parameter
/// has no gradient.
void optim_step(std::span<Tensor> params, OptimState& state);

void zero_grads(std::span<Tensor> params);

}  // namespace dpnse
