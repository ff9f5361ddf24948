#pragma once

#include "cfb/tensor.hpp"

#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cfb {

// Layer vocabulary. A network is an ordered list of these ending in
// SoftmaxReadout; parameters exist only for FullyConnected and Conv.
struct FullyConnected {
  Index in_dim = 0;
  Index out_dim = 0;
};

struct Conv {
  Index filters = 0;
  Index kernel = 0;
  Index stride = 1;
  Index pad = 0;
};

// Non-overlapping pooling: stride equals the window.
struct MaxPool {
  Index window = 2;
};

struct Relu {};

// Inverted dropout: surviving units are scaled by 1/(1-rate) at train time,
// so evaluation mode is the identity.
struct Dropout {
  double rate = 0.5;
};

// Local winner-takes-all over consecutive blocks of the flattened features.
// The block maximum passes unchanged, all other entries become zero.
struct Lwta {
  Index block_size = 2;
};

// Terminal marker. The network emits raw logits; softmax lives in the loss
// (and wherever class probabilities are needed).
struct SoftmaxReadout {
  Index num_classes = 0;
};

using LayerSpec =
    std::variant<FullyConnected, Conv, MaxPool, Relu, Dropout, Lwta, SoftmaxReadout>;

struct NetworkSpec {
  Shape input_shape;             // per-sample shape, e.g. {784} or {28,28,1}
  std::vector<LayerSpec> layers;
};

inline const char* layer_kind_name(const LayerSpec& layer) {
  struct Namer {
    const char* operator()(const FullyConnected&) const { return "FullyConnected"; }
    const char* operator()(const Conv&) const { return "Conv"; }
    const char* operator()(const MaxPool&) const { return "MaxPool"; }
    const char* operator()(const Relu&) const { return "ReLU"; }
    const char* operator()(const Dropout&) const { return "Dropout"; }
    const char* operator()(const Lwta&) const { return "LWTA"; }
    const char* operator()(const SoftmaxReadout&) const { return "SoftmaxReadout"; }
  };
  return std::visit(Namer{}, layer);
}

// Per-sample output shape of every layer, in order. Throws on any topology
// error: dimension mismatches, bad hyperparameters, misplaced readout.
inline std::vector<Shape> layer_output_shapes(const NetworkSpec& spec) {
  if (spec.layers.empty()) throw std::invalid_argument("network: no layers");
  if (spec.input_shape.empty() || shape_size(spec.input_shape) <= 0)
    throw std::invalid_argument("network: bad input shape " + shape_string(spec.input_shape));

  std::vector<Shape> out;
  out.reserve(spec.layers.size());
  Shape cur = spec.input_shape;

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    const bool last = i + 1 == spec.layers.size();
    auto fail = [&](const std::string& msg) {
      throw std::invalid_argument("network: layer " + std::to_string(i) + " (" +
                                  layer_kind_name(layer) + "): " + msg);
    };

    if (std::holds_alternative<SoftmaxReadout>(layer) && !last)
      fail("readout must be the final layer");

    if (const auto* fc = std::get_if<FullyConnected>(&layer)) {
      if (fc->in_dim <= 0 || fc->out_dim <= 0) fail("dimensions must be positive");
      if (fc->in_dim != shape_size(cur))
        fail("expects " + std::to_string(fc->in_dim) + " inputs, receives " +
             shape_string(cur));
      cur = {fc->out_dim};
    } else if (const auto* cv = std::get_if<Conv>(&layer)) {
      if (cv->filters <= 0 || cv->kernel <= 0 || cv->stride <= 0 || cv->pad < 0)
        fail("bad conv hyperparameters");
      if (cur.size() != 3) fail("expects a [H,W,C] input, receives " + shape_string(cur));
      const Index h = cur[0], w = cur[1];
      const Index oh = (h + 2 * cv->pad - cv->kernel) / cv->stride + 1;
      const Index ow = (w + 2 * cv->pad - cv->kernel) / cv->stride + 1;
      if (oh <= 0 || ow <= 0) fail("kernel larger than padded input");
      cur = {oh, ow, cv->filters};
    } else if (const auto* mp = std::get_if<MaxPool>(&layer)) {
      if (mp->window <= 0) fail("window must be positive");
      if (cur.size() != 3) fail("expects a [H,W,C] input, receives " + shape_string(cur));
      if (cur[0] % mp->window || cur[1] % mp->window)
        fail("window " + std::to_string(mp->window) + " does not tile " + shape_string(cur));
      cur = {cur[0] / mp->window, cur[1] / mp->window, cur[2]};
    } else if (const auto* dp = std::get_if<Dropout>(&layer)) {
      if (!(dp->rate > 0.0 && dp->rate < 1.0)) fail("rate must lie strictly in (0,1)");
    } else if (const auto* lw = std::get_if<Lwta>(&layer)) {
      if (lw->block_size < 2) fail("block size must be at least 2");
      if (shape_size(cur) % lw->block_size)
        fail("feature count " + std::to_string(shape_size(cur)) + " not divisible by block size " +
             std::to_string(lw->block_size));
    } else if (const auto* sm = std::get_if<SoftmaxReadout>(&layer)) {
      if (sm->num_classes <= 0) fail("class count must be positive");
      if (shape_size(cur) != sm->num_classes)
        fail("expects " + std::to_string(sm->num_classes) + " logits, receives " +
             shape_string(cur));
      cur = {sm->num_classes};
    }
    out.push_back(cur);
  }

  if (!std::holds_alternative<SoftmaxReadout>(spec.layers.back()))
    throw std::invalid_argument("network: must end in SoftmaxReadout");
  return out;
}

inline void validate(const NetworkSpec& spec) { layer_output_shapes(spec); }

inline Index readout_classes(const NetworkSpec& spec) {
  return std::get<SoftmaxReadout>(spec.layers.back()).num_classes;
}

}  // namespace cfb
