#pragma once

#include "cfb/dataset.hpp"
#include "cfb/loss.hpp"
#include "cfb/network.hpp"

#include <random>

namespace cfbtest {

// Gaussian-blob "digit" sets shaped like MNIST ([n,28,28], values in [0,1]):
// class c lights up pixel block c with noise on top. Linearly separable, so
// tiny networks train in a few dozen iterations.
inline cfb::LabeledSet make_blobs(int per_class, const std::vector<int>& classes,
                                  std::uint64_t seed, float noise = 0.15f) {
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  std::normal_distribution<float> jitter(0.0f, noise);
  const cfb::Index n = static_cast<cfb::Index>(per_class) * static_cast<cfb::Index>(classes.size());
  cfb::LabeledSet set;
  set.images = cfb::Tensor<cfb::Real>({n, 28, 28});
  set.labels.reserve(static_cast<std::size_t>(n));
  cfb::Index row = 0;
  for (int k = 0; k < per_class; ++k) {
    for (int c : classes) {
      float* img = set.images.data() + row * 784;
      for (int j = 0; j < 784; ++j) {
        const bool on = j >= c * 78 && j < (c + 1) * 78;
        img[j] = std::clamp((on ? 0.9f : 0.1f) + jitter(rng), 0.0f, 1.0f);
      }
      set.labels.push_back(c);
      ++row;
    }
  }
  return set;
}

// Class-split task over blob data, with the union test set concatenated the
// same way the real task builder does it.
inline cfb::TaskSpec make_blob_task(const std::vector<int>& d1_classes,
                                    const std::vector<int>& d2_classes, int per_class,
                                    std::uint64_t seed) {
  cfb::TaskSpec task;
  task.name = "blobs";
  task.kind = cfb::TaskKind::class_split;
  task.d1_classes = d1_classes;
  task.d2_classes = d2_classes;
  task.d1_train = make_blobs(per_class, d1_classes, seed);
  task.d1_test = make_blobs(per_class / 2, d1_classes, seed + 1);
  task.d2_train = make_blobs(per_class, d2_classes, seed + 2);
  task.d2_test = make_blobs(per_class / 2, d2_classes, seed + 3);

  const cfb::Index n1 = task.d1_test.size(), n2 = task.d2_test.size();
  task.union_test.images = cfb::Tensor<cfb::Real>({n1 + n2, 28, 28});
  std::copy(task.d1_test.images.data(), task.d1_test.images.data() + n1 * 784,
            task.union_test.images.data());
  std::copy(task.d2_test.images.data(), task.d2_test.images.data() + n2 * 784,
            task.union_test.images.data() + n1 * 784);
  task.union_test.labels = task.d1_test.labels;
  task.union_test.labels.insert(task.union_test.labels.end(), task.d2_test.labels.begin(),
                                task.d2_test.labels.end());
  return task;
}

// Loss of a full forward pass with a pinned dropout seed, as a function of
// the parameters; the probe target for finite-difference checks.
template <class Scalar>
double net_loss(const cfb::NetworkState<Scalar>& state, const cfb::Tensor<Scalar>& batch,
                const std::vector<int>& labels, cfb::Mode mode, std::uint64_t dropout_seed) {
  auto [logits, trace] = cfb::forward(state, batch, mode, dropout_seed);
  (void)trace;
  auto [loss, grad] = cfb::cross_entropy_loss(logits, std::span<const int>(labels));
  (void)grad;
  return loss;
}

struct FdCheckResult {
  int probed = 0;
  int skipped = 0;  // probes whose two-step sizes disagreed (kink crossed)
  double max_rel_err = 0.0;
};

// Central finite differences against analytic gradients on a handful of
// parameters per tensor. Probes where halving the step changes the estimate
// are discarded: those sit on a ReLU/LWTA/pool kink.
template <class Scalar>
FdCheckResult fd_check(cfb::NetworkState<Scalar>& state, const cfb::Tensor<Scalar>& batch,
                       const std::vector<int>& labels, cfb::Mode mode,
                       std::uint64_t dropout_seed, int probes_per_tensor = 4,
                       double step = 1e-5) {
  auto [logits, trace] = cfb::forward(state, batch, mode, dropout_seed);
  auto [loss, dlogits] = cfb::cross_entropy_loss(logits, std::span<const int>(labels));
  (void)loss;
  const cfb::Gradients<Scalar> grads = cfb::backward(state, trace, dlogits);

  FdCheckResult result;
  for (std::size_t t = 0; t < state.params.size(); ++t) {
    const cfb::Index n = state.params[t].size();
    for (int k = 0; k < probes_per_tensor; ++k) {
      const cfb::Index at = (n * k) / probes_per_tensor + (n > 7 ? 3 : 0);
      const cfb::Index i = std::min(at, n - 1);
      const Scalar saved = state.params[t][i];
      auto fd_at = [&](double h) {
        state.params[t][i] = saved + static_cast<Scalar>(h);
        const double up = net_loss(state, batch, labels, mode, dropout_seed);
        state.params[t][i] = saved - static_cast<Scalar>(h);
        const double down = net_loss(state, batch, labels, mode, dropout_seed);
        state.params[t][i] = saved;
        return (up - down) / (2.0 * h);
      };
      const double fd = fd_at(step);
      const double fd_half = fd_at(step / 2.0);
      if (std::abs(fd - fd_half) > 1e-4 * std::max(1.0, std::abs(fd))) {
        ++result.skipped;
        continue;
      }
      const double analytic = static_cast<double>(grads[t][i]);
      const double rel =
          std::abs(analytic - fd) / std::max({1e-8, std::abs(analytic), std::abs(fd)});
      result.max_rel_err = std::max(result.max_rel_err, rel);
      ++result.probed;
    }
  }
  return result;
}

}  // namespace cfbtest
