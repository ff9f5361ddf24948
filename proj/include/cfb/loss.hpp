#pragma once

#include "cfb/tensor.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>

namespace cfb {

// Row-wise softmax of a [batch, classes] logit tensor, computed against the
// row maximum for stability.
template <class Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits) {
  if (logits.rank() != 2) throw std::invalid_argument("softmax: logits must be [batch, classes]");
  const Index b = logits.extent(0), c = logits.extent(1);
  Tensor<Scalar> probs(logits.shape());
  auto in = logits.matrix(b, c);
  auto out = probs.matrix(b, c);
  for (Index r = 0; r < b; ++r) {
    const Scalar m = in.row(r).maxCoeff();
    out.row(r) = (in.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return probs;
}

// Mean negative log-likelihood of the labels under softmax(logits), together
// with its gradient w.r.t. the logits: (softmax - onehot) / batch.
template <class Scalar>
std::pair<double, Tensor<Scalar>> cross_entropy_loss(const Tensor<Scalar>& logits,
                                                     std::span<const int> labels) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be 2-D");
  const Index b = logits.extent(0), c = logits.extent(1);
  if (b != static_cast<Index>(labels.size()))
    throw std::invalid_argument("cross_entropy: batch/label count mismatch");
  for (int label : labels)
    if (label < 0 || label >= c)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                  " outside [0," + std::to_string(c) + ")");

  Tensor<Scalar> grad = softmax(logits);
  auto g = grad.matrix(b, c);
  auto in = logits.matrix(b, c);
  double loss = 0.0;
  for (Index r = 0; r < b; ++r) {
    // log softmax evaluated directly for the true class
    const Scalar m = in.row(r).maxCoeff();
    const double lse = std::log((in.row(r).array() - m).exp().sum());
    loss -= static_cast<double>(in(r, labels[static_cast<std::size_t>(r)]) - m) - lse;
    g(r, labels[static_cast<std::size_t>(r)]) -= Scalar(1);
  }
  g /= static_cast<Scalar>(b);
  return {loss / static_cast<double>(b), std::move(grad)};
}

}  // namespace cfb
