#pragma once

#include "cfb/loss.hpp"
#include "cfb/network.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cfb {

// Diagonal Fisher information estimate, one non-negative tensor per
// parameter tensor.
template <class Scalar>
struct FisherDiag {
  std::vector<Tensor<Scalar>> diag;
};

// Parameter snapshot taken when the first task is consolidated.
template <class Scalar>
struct AnchorParams {
  std::vector<Tensor<Scalar>> params;
};

template <class Scalar>
AnchorParams<Scalar> capture_anchor(const NetworkState<Scalar>& state) {
  return {state.params};
}

// Importance weight of the quadratic penalty; the retraining rate fixes it.
inline double lambda_from_retrain_rate(double epsilon_d2) {
  if (!(epsilon_d2 > 0.0))
    throw std::invalid_argument("lambda_from_retrain_rate: rate must be positive");
  return 1.0 / epsilon_d2;
}

// Monte-Carlo Fisher diagonal: draw single samples from the given pool,
// sample a label from the model's own softmax, and average the squared
// log-likelihood gradients. Runs the network in eval mode.
template <class Scalar>
FisherDiag<Scalar> estimate_fisher(const NetworkState<Scalar>& state,
                                   const Tensor<Scalar>& samples, Index n_samples,
                                   std::uint64_t seed) {
  if (samples.empty() || samples.extent(0) == 0)
    throw std::invalid_argument("estimate_fisher: empty sample set");
  if (n_samples <= 0) throw std::invalid_argument("estimate_fisher: n_samples must be positive");
  const Index pool = samples.extent(0);
  const Index sample_len = samples.size() / pool;
  if (sample_len != shape_size(state.spec.input_shape))
    throw std::invalid_argument("estimate_fisher: sample size does not match network input");

  FisherDiag<Scalar> fisher;
  fisher.diag.reserve(state.params.size());
  for (const auto& p : state.params) fisher.diag.emplace_back(p.shape());

  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  std::uniform_int_distribution<Index> pick(0, pool - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Shape one{1};
  one.insert(one.end(), state.spec.input_shape.begin(), state.spec.input_shape.end());
  Tensor<Scalar> x(one);
  Gradients<Scalar> grads;

  for (Index s = 0; s < n_samples; ++s) {
    const Index at = pick(rng);
    std::copy(samples.data() + at * sample_len, samples.data() + (at + 1) * sample_len,
              x.data());
    auto [logits, trace] = forward(state, x, Mode::eval);
    Tensor<Scalar> probs = softmax(logits);

    // inverse-CDF draw of the label from the model's predictive distribution
    const double u = unit(rng);
    int label = 0;
    double cum = 0.0;
    for (Index k = 0; k < probs.size(); ++k) {
      cum += static_cast<double>(probs[k]);
      if (u < cum) {
        label = static_cast<int>(k);
        break;
      }
      if (k + 1 == probs.size()) label = static_cast<int>(k);  // guard rounding
    }

    // d(-log p(label))/dlogits for one sample; squaring drops the sign
    const int labels[1] = {label};
    auto [loss, dlogits] = cross_entropy_loss(logits, labels);
    (void)loss;
    backward(state, trace, dlogits, grads);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!grads[i].all_finite())
        throw std::runtime_error("estimate_fisher: non-finite gradient");
      fisher.diag[i].array() += grads[i].array().square();
    }
  }
  for (auto& f : fisher.diag) f.array() /= static_cast<Scalar>(n_samples);
  return fisher;
}

// Quadratic consolidation penalty (lambda/2) * sum_i F_i (theta_i - anchor_i)^2
// and its gradient lambda * F_i (theta_i - anchor_i), added to the training
// loss during retraining.
template <class Scalar>
std::pair<double, Gradients<Scalar>> ewc_penalty(const NetworkState<Scalar>& state,
                                                 const AnchorParams<Scalar>& anchor,
                                                 const FisherDiag<Scalar>& fisher,
                                                 double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("ewc_penalty: lambda must be non-negative");
  if (anchor.params.size() != state.params.size() || fisher.diag.size() != state.params.size())
    throw std::invalid_argument("ewc_penalty: anchor/fisher do not mirror the parameters");

  Gradients<Scalar> grads;
  grads.reserve(state.params.size());
  double penalty = 0.0;
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    if (!anchor.params[i].same_shape(state.params[i]) ||
        !fisher.diag[i].same_shape(state.params[i]))
      throw std::invalid_argument("ewc_penalty: shape mismatch at " + state.param_names[i]);
    Tensor<Scalar> g(state.params[i].shape());
    auto delta = state.params[i].array() - anchor.params[i].array();
    g.array() = static_cast<Scalar>(lambda) * fisher.diag[i].array() * delta;
    penalty += 0.5 * lambda *
               static_cast<double>((fisher.diag[i].array() * delta.square()).sum());
    grads.push_back(std::move(g));
  }
  return {penalty, std::move(grads)};
}

}  // namespace cfb
