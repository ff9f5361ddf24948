#pragma once

#include "cfb/layers.hpp"
#include "cfb/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cfb {

enum class Mode { train, eval };

// Trainable state of a network: one weight and one bias tensor per
// FullyConnected/Conv layer, plus shape-parallel momentum buffers.
template <class Scalar>
struct NetworkState {
  NetworkSpec spec;
  std::vector<Shape> layer_shapes;      // per-layer output shapes
  std::vector<int> param_base;          // first param slot per layer, -1 if none
  std::vector<Tensor<Scalar>> params;   // [W0, b0, W1, b1, ...]
  std::vector<Tensor<Scalar>> momentum; // zero-initialized, same shapes
  std::vector<std::string> param_names;
  std::uint64_t version = 0;            // bumped by every optimizer step
};

template <class Scalar>
using Gradients = std::vector<Tensor<Scalar>>;

// Everything the backward pass needs from one forward pass: cached layer
// inputs (FC), im2col patches (Conv), routing masks (ReLU/Dropout/LWTA) and
// pool winner offsets. Tied to the producing state and its version so a
// stale trace is rejected.
template <class Scalar>
struct ForwardTrace {
  struct Entry {
    Tensor<Scalar> input;        // FullyConnected: activations entering the layer
    Tensor<Scalar> patches;      // Conv: im2col rows
    Tensor<Scalar> mask;         // ReLU {0,1}, Dropout {0, 1/(1-rate)}, LWTA {0,1}
    std::vector<Index> winners;  // MaxPool: flat input offset per output cell
  };
  std::vector<Entry> entries;
  Index batch = 0;
  Mode mode = Mode::eval;
  const NetworkState<Scalar>* origin = nullptr;
  std::uint64_t version = 0;
};

namespace detail {

// Patch extraction for convolution: [B,H,W,C] -> [B*oh*ow, K*K*C], padding
// reads as zero. Patch columns are ordered (kh, kw, c), matching the weight
// layout, so the convolution is a single GEMM.
template <class Scalar>
Tensor<Scalar> im2col(const Tensor<Scalar>& x, Index b, Index h, Index w, Index c,
                      Index k, Index stride, Index pad, Index oh, Index ow) {
  Tensor<Scalar> patches({b * oh * ow, k * k * c});
  const Scalar* src = x.data();
  Scalar* dst = patches.data();
  const Index patch_len = k * k * c;
  for (Index bi = 0; bi < b; ++bi) {
    for (Index po = 0; po < oh; ++po) {
      for (Index qo = 0; qo < ow; ++qo) {
        Scalar* row = dst + ((bi * oh + po) * ow + qo) * patch_len;
        for (Index kh = 0; kh < k; ++kh) {
          const Index ih = po * stride - pad + kh;
          if (ih < 0 || ih >= h) continue;  // stays zero
          for (Index kw = 0; kw < k; ++kw) {
            const Index iw = qo * stride - pad + kw;
            if (iw < 0 || iw >= w) continue;
            const Scalar* cell = src + ((bi * h + ih) * w + iw) * c;
            std::copy(cell, cell + c, row + (kh * k + kw) * c);
          }
        }
      }
    }
  }
  return patches;
}

// Adjoint of im2col: scatter-add patch gradients back onto the input grid.
template <class Scalar>
Tensor<Scalar> col2im(const Tensor<Scalar>& dpatches, Index b, Index h, Index w, Index c,
                      Index k, Index stride, Index pad, Index oh, Index ow) {
  Tensor<Scalar> dx({b, h, w, c});
  Scalar* dst = dx.data();
  const Scalar* src = dpatches.data();
  const Index patch_len = k * k * c;
  for (Index bi = 0; bi < b; ++bi) {
    for (Index po = 0; po < oh; ++po) {
      for (Index qo = 0; qo < ow; ++qo) {
        const Scalar* row = src + ((bi * oh + po) * ow + qo) * patch_len;
        for (Index kh = 0; kh < k; ++kh) {
          const Index ih = po * stride - pad + kh;
          if (ih < 0 || ih >= h) continue;
          for (Index kw = 0; kw < k; ++kw) {
            const Index iw = qo * stride - pad + kw;
            if (iw < 0 || iw >= w) continue;
            Scalar* cell = dst + ((bi * h + ih) * w + iw) * c;
            const Scalar* seg = row + (kh * k + kw) * c;
            for (Index ci = 0; ci < c; ++ci) cell[ci] += seg[ci];
          }
        }
      }
    }
  }
  return dx;
}

}  // namespace detail

// Fresh parameters for the given topology: weights are zero-mean normal with
// std sqrt(2/fan_in), biases zero, momentum zero. Identical seeds give
// bitwise-identical states.
template <class Scalar>
NetworkState<Scalar> init_network(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkState<Scalar> state;
  state.spec = spec;
  state.layer_shapes = layer_output_shapes(spec);  // throws on malformed specs
  state.param_base.assign(spec.layers.size(), -1);

  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  Shape cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    auto add_params = [&](Shape wshape, Index out, Index fan_in, const std::string& tag) {
      state.param_base[i] = static_cast<int>(state.params.size());
      Tensor<Scalar> weight(std::move(wshape));
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      std::normal_distribution<double> dist(0.0, stddev);
      for (Index n = 0; n < weight.size(); ++n)
        weight[n] = static_cast<Scalar>(dist(rng));
      state.params.push_back(std::move(weight));
      state.params.emplace_back(Shape{out});  // bias, zero
      state.param_names.push_back(tag + std::to_string(i) + ".W");
      state.param_names.push_back(tag + std::to_string(i) + ".b");
    };

    if (const auto* fc = std::get_if<FullyConnected>(&spec.layers[i])) {
      add_params({fc->in_dim, fc->out_dim}, fc->out_dim, fc->in_dim, "fc");
    } else if (const auto* cv = std::get_if<Conv>(&spec.layers[i])) {
      const Index cin = cur[2];
      add_params({cv->kernel * cv->kernel * cin, cv->filters}, cv->filters,
                 cv->kernel * cv->kernel * cin, "conv");
    }
    cur = state.layer_shapes[i];
  }

  state.momentum.reserve(state.params.size());
  for (const auto& p : state.params) state.momentum.emplace_back(p.shape());
  return state;
}

namespace detail {

template <class Scalar>
std::pair<Tensor<Scalar>, ForwardTrace<Scalar>> run_forward(const NetworkState<Scalar>& state,
                                                            const Tensor<Scalar>& batch,
                                                            Mode mode, std::uint64_t rng_seed,
                                                            bool cache) {
  const NetworkSpec& spec = state.spec;
  if (batch.rank() != static_cast<Index>(spec.input_shape.size()) + 1 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(), batch.shape().begin() + 1))
    throw std::invalid_argument("forward: batch shape " + shape_string(batch.shape()) +
                                " does not match input shape " +
                                shape_string(spec.input_shape));
  const Index b = batch.extent(0);

  ForwardTrace<Scalar> trace;
  trace.batch = b;
  trace.mode = mode;
  trace.origin = &state;
  trace.version = state.version;
  if (cache) trace.entries.resize(spec.layers.size());

  std::mt19937 rng(static_cast<std::mt19937::result_type>(rng_seed));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Tensor<Scalar> x = batch;
  Shape feat = spec.input_shape;

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    typename ForwardTrace<Scalar>::Entry* entry = cache ? &trace.entries[i] : nullptr;
    const Shape& out_feat = state.layer_shapes[i];

    if (const auto* fc = std::get_if<FullyConnected>(&spec.layers[i])) {
      const int base = state.param_base[i];
      const auto& weight = state.params[base];
      const auto& bias = state.params[base + 1];
      Tensor<Scalar> y(Shape{b, fc->out_dim});
      y.matrix(b, fc->out_dim).noalias() =
          x.matrix(b, fc->in_dim) * weight.matrix(fc->in_dim, fc->out_dim);
      y.matrix(b, fc->out_dim).rowwise() +=
          bias.matrix(1, fc->out_dim).row(0);
      if (entry) entry->input = std::move(x);
      x = std::move(y);
    } else if (const auto* cv = std::get_if<Conv>(&spec.layers[i])) {
      const int base = state.param_base[i];
      const auto& weight = state.params[base];
      const auto& bias = state.params[base + 1];
      const Index h = feat[0], w = feat[1], c = feat[2];
      const Index oh = out_feat[0], ow = out_feat[1];
      Tensor<Scalar> patches =
          im2col(x, b, h, w, c, cv->kernel, cv->stride, cv->pad, oh, ow);
      const Index cols = cv->kernel * cv->kernel * c;
      Tensor<Scalar> y(Shape{b, oh, ow, cv->filters});
      y.matrix(b * oh * ow, cv->filters).noalias() =
          patches.matrix(b * oh * ow, cols) * weight.matrix(cols, cv->filters);
      y.matrix(b * oh * ow, cv->filters).rowwise() += bias.matrix(1, cv->filters).row(0);
      if (entry) entry->patches = std::move(patches);
      x = std::move(y);
    } else if (const auto* mp = std::get_if<MaxPool>(&spec.layers[i])) {
      const Index h = feat[0], w = feat[1], c = feat[2];
      const Index oh = out_feat[0], ow = out_feat[1];
      const Index win = mp->window;
      Tensor<Scalar> y(Shape{b, oh, ow, c});
      std::vector<Index> winners(static_cast<std::size_t>(b * oh * ow * c));
      const Scalar* src = x.data();
      Scalar* dst = y.data();
      Index oidx = 0;
      for (Index bi = 0; bi < b; ++bi)
        for (Index po = 0; po < oh; ++po)
          for (Index qo = 0; qo < ow; ++qo)
            for (Index ci = 0; ci < c; ++ci, ++oidx) {
              Scalar best{};
              Index best_at = -1;
              for (Index kh = 0; kh < win; ++kh)
                for (Index kw = 0; kw < win; ++kw) {
                  const Index at =
                      ((bi * h + po * win + kh) * w + qo * win + kw) * c + ci;
                  if (best_at < 0 || src[at] > best) {
                    best = src[at];
                    best_at = at;
                  }
                }
              dst[oidx] = best;
              winners[static_cast<std::size_t>(oidx)] = best_at;
            }
      if (entry) entry->winners = std::move(winners);
      x = std::move(y);
    } else if (std::holds_alternative<Relu>(spec.layers[i])) {
      Tensor<Scalar> mask(x.shape());
      mask.array() = (x.array() > Scalar(0)).template cast<Scalar>();
      x.array() *= mask.array();
      if (entry) entry->mask = std::move(mask);
    } else if (const auto* dp = std::get_if<Dropout>(&spec.layers[i])) {
      if (mode == Mode::train) {
        const Scalar scale = static_cast<Scalar>(1.0 / (1.0 - dp->rate));
        Tensor<Scalar> mask(x.shape());
        for (Index n = 0; n < mask.size(); ++n)
          mask[n] = uniform(rng) < dp->rate ? Scalar(0) : scale;
        x.array() *= mask.array();
        if (entry) entry->mask = std::move(mask);
      }
      // eval: identity, no mask recorded
    } else if (const auto* lw = std::get_if<Lwta>(&spec.layers[i])) {
      const Index f = shape_size(feat);
      const Index bs = lw->block_size;
      Tensor<Scalar> mask(x.shape());
      Scalar* xv = x.data();
      Scalar* mv = mask.data();
      for (Index bi = 0; bi < b; ++bi) {
        Scalar* row = xv + bi * f;
        Scalar* mrow = mv + bi * f;
        for (Index blk = 0; blk < f; blk += bs) {
          Index win_at = blk;  // ties break toward the lowest index
          for (Index j = blk + 1; j < blk + bs; ++j)
            if (row[j] > row[win_at]) win_at = j;
          mrow[win_at] = Scalar(1);
        }
        for (Index j = 0; j < f; ++j) row[j] *= mrow[j];
      }
      if (entry) entry->mask = std::move(mask);
    }
    // SoftmaxReadout: logits pass through untouched.

    feat = out_feat;
  }

  return {std::move(x), std::move(trace)};
}

}  // namespace detail

// Forward pass. Train mode samples dropout from rng_seed; eval mode is a pure
// function of (state, batch). Returns raw logits [batch, classes] and the
// trace consumed by backward().
template <class Scalar>
std::pair<Tensor<Scalar>, ForwardTrace<Scalar>> forward(const NetworkState<Scalar>& state,
                                                        const Tensor<Scalar>& batch, Mode mode,
                                                        std::uint64_t rng_seed = 0) {
  return detail::run_forward(state, batch, mode, rng_seed, /*cache=*/true);
}

// Eval-mode logits without trace bookkeeping; used by evaluation loops.
template <class Scalar>
Tensor<Scalar> forward_logits(const NetworkState<Scalar>& state, const Tensor<Scalar>& batch) {
  return detail::run_forward(state, batch, Mode::eval, 0, /*cache=*/false).first;
}

// Backpropagation through the traced forward pass. Gradients align slot by
// slot with state.params. Dropout/LWTA/MaxPool route gradients only through
// the units that survived the forward pass.
template <class Scalar>
void backward(const NetworkState<Scalar>& state, const ForwardTrace<Scalar>& trace,
              const Tensor<Scalar>& dlogits, Gradients<Scalar>& grads) {
  const NetworkSpec& spec = state.spec;
  if (trace.origin != &state || trace.version != state.version)
    throw std::logic_error("backward: trace is stale or belongs to a different state");
  if (trace.entries.size() != spec.layers.size())
    throw std::logic_error("backward: trace has no cached activations");
  const Index b = trace.batch;
  if (dlogits.rank() != 2 || dlogits.extent(0) != b ||
      dlogits.extent(1) != readout_classes(spec))
    throw std::invalid_argument("backward: upstream gradient shape " +
                                shape_string(dlogits.shape()));

  grads.resize(state.params.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(state.params[i])) grads[i] = Tensor<Scalar>(state.params[i].shape());
    else grads[i].set_zero();
  }

  Tensor<Scalar> dy = dlogits;
  for (int i = static_cast<int>(spec.layers.size()) - 1; i >= 0; --i) {
    const auto& entry = trace.entries[static_cast<std::size_t>(i)];
    const Shape& in_feat = i == 0 ? spec.input_shape : state.layer_shapes[static_cast<std::size_t>(i) - 1];

    if (const auto* fc = std::get_if<FullyConnected>(&spec.layers[static_cast<std::size_t>(i)])) {
      const int base = state.param_base[static_cast<std::size_t>(i)];
      auto dmat = dy.matrix(b, fc->out_dim);
      grads[base].matrix(fc->in_dim, fc->out_dim).noalias() =
          entry.input.matrix(b, fc->in_dim).transpose() * dmat;
      grads[base + 1].matrix(1, fc->out_dim) = dmat.colwise().sum();
      if (i > 0) {
        Tensor<Scalar> dx(Shape{b, fc->in_dim});
        dx.matrix(b, fc->in_dim).noalias() =
            dmat * state.params[base].matrix(fc->in_dim, fc->out_dim).transpose();
        dx.reshape([&] {
          Shape s{b};
          s.insert(s.end(), in_feat.begin(), in_feat.end());
          return s;
        }());
        dy = std::move(dx);
      }
    } else if (const auto* cv = std::get_if<Conv>(&spec.layers[static_cast<std::size_t>(i)])) {
      const int base = state.param_base[static_cast<std::size_t>(i)];
      const Index h = in_feat[0], w = in_feat[1], c = in_feat[2];
      const Shape& out_feat = state.layer_shapes[static_cast<std::size_t>(i)];
      const Index oh = out_feat[0], ow = out_feat[1];
      const Index cols = cv->kernel * cv->kernel * c;
      auto dmat = dy.matrix(b * oh * ow, cv->filters);
      grads[base].matrix(cols, cv->filters).noalias() =
          entry.patches.matrix(b * oh * ow, cols).transpose() * dmat;
      grads[base + 1].matrix(1, cv->filters) = dmat.colwise().sum();
      if (i > 0) {
        Tensor<Scalar> dpatches(Shape{b * oh * ow, cols});
        dpatches.matrix(b * oh * ow, cols).noalias() =
            dmat * state.params[base].matrix(cols, cv->filters).transpose();
        dy = detail::col2im(dpatches, b, h, w, c, cv->kernel, cv->stride, cv->pad, oh, ow);
      }
    } else if (std::holds_alternative<MaxPool>(spec.layers[static_cast<std::size_t>(i)])) {
      Shape s{b};
      s.insert(s.end(), in_feat.begin(), in_feat.end());
      Tensor<Scalar> dx(s);
      const Scalar* src = dy.data();
      Scalar* dst = dx.data();
      for (std::size_t j = 0; j < entry.winners.size(); ++j)
        dst[entry.winners[j]] += src[j];
      dy = std::move(dx);
    } else if (std::holds_alternative<Relu>(spec.layers[static_cast<std::size_t>(i)]) ||
               std::holds_alternative<Lwta>(spec.layers[static_cast<std::size_t>(i)])) {
      dy.array() *= entry.mask.array();
    } else if (std::holds_alternative<Dropout>(spec.layers[static_cast<std::size_t>(i)])) {
      if (trace.mode == Mode::train) dy.array() *= entry.mask.array();
    }
    // SoftmaxReadout: identity.
  }
}

template <class Scalar>
Gradients<Scalar> backward(const NetworkState<Scalar>& state, const ForwardTrace<Scalar>& trace,
                           const Tensor<Scalar>& dlogits) {
  Gradients<Scalar> grads;
  backward(state, trace, dlogits, grads);
  return grads;
}

// Fraction of samples whose argmax logit equals the label, evaluated in eval
// mode over fixed-size chunks. Argmax ties break toward the lowest class.
template <class Scalar>
double accuracy(const NetworkState<Scalar>& state, const Tensor<Scalar>& images,
                std::span<const int> labels, Index chunk = 250) {
  const Index n = images.extent(0);
  if (n == 0 || labels.empty()) throw std::invalid_argument("accuracy: empty test set");
  if (n != static_cast<Index>(labels.size()))
    throw std::invalid_argument("accuracy: image/label count mismatch");
  const Index sample = images.size() / n;
  if (sample != shape_size(state.spec.input_shape))
    throw std::invalid_argument("accuracy: sample size " + std::to_string(sample) +
                                " does not match network input " +
                                shape_string(state.spec.input_shape));

  const Index classes = readout_classes(state.spec);
  Index correct = 0;
  for (Index start = 0; start < n; start += chunk) {
    const Index m = std::min(chunk, n - start);
    Shape bshape{m};
    bshape.insert(bshape.end(), state.spec.input_shape.begin(), state.spec.input_shape.end());
    Tensor<Scalar> batch(bshape);
    std::copy(images.data() + start * sample, images.data() + (start + m) * sample,
              batch.data());
    Tensor<Scalar> logits = forward_logits(state, batch);
    const Scalar* row = logits.data();
    for (Index r = 0; r < m; ++r, row += classes) {
      Index arg = 0;
      for (Index k = 1; k < classes; ++k)
        if (row[k] > row[arg]) arg = k;
      if (arg == labels[static_cast<std::size_t>(start + r)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace cfb
