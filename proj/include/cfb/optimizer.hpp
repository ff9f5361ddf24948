#pragma once

#include "cfb/network.hpp"

#include <stdexcept>
#include <string>

namespace cfb {

// Classical momentum update: v <- mu*v + g, theta <- theta - lr*v.
// Non-finite gradients abort the run; divergence must not pass silently.
template <class Scalar>
void sgd_momentum_step(NetworkState<Scalar>& state, const Gradients<Scalar>& grads,
                       double learning_rate, double momentum = 0.99) {
  if (learning_rate <= 0.0) throw std::invalid_argument("sgd: learning rate must be positive");
  if (grads.size() != state.params.size())
    throw std::invalid_argument("sgd: gradient/parameter count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(state.params[i]))
      throw std::invalid_argument("sgd: gradient shape mismatch at " + state.param_names[i]);
    if (!grads[i].all_finite())
      throw std::runtime_error("sgd: non-finite gradient in " + state.param_names[i] +
                               ", aborting run");
  }
  const Scalar mu = static_cast<Scalar>(momentum);
  const Scalar lr = static_cast<Scalar>(learning_rate);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto v = state.momentum[i].array();
    v = mu * v + grads[i].array();
    state.params[i].array() -= lr * v;
  }
  ++state.version;
}

}  // namespace cfb
