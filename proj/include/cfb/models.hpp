#pragma once

#include "cfb/layers.hpp"

#include <string>
#include <vector>

namespace cfb {

// The six benchmark model families: fully-connected and convolutional nets,
// each with or without dropout, an LWTA net, and the consolidation model
// (dropout net + quadratic penalty during retraining).
enum class ModelFamily { fc, dfc, conv, dconv, lwta, ewc };

const std::vector<ModelFamily>& all_families();
std::string family_name(ModelFamily family);
ModelFamily parse_family(const std::string& name);  // throws on unknown names

bool family_is_conv(ModelFamily family);
bool family_has_dropout(ModelFamily family);
inline bool family_is_ewc(ModelFamily family) { return family == ModelFamily::ewc; }

// Grid point: topology and the two learning rates. Conv families keep their
// fixed topology and vary only the rates.
struct HyperParams {
  ModelFamily family = ModelFamily::fc;
  int hidden_layers = 2;
  int layer_size = 200;
  double eps_d1 = 0.01;
  double eps_d2 = 0.0;  // unset for initial-training-only grid points
};

std::string hyperparams_string(const HyperParams& hp);

// Hyperparameter ranges; defaults are the benchmark grids. Empty vectors in
// overrides keep the family defaults.
struct GridRanges {
  std::vector<int> hidden_layers;   // {2,3}
  std::vector<int> layer_sizes;     // {200,400,800}
  std::vector<double> eps_d1;       // {0.01, 0.001}
  std::vector<double> eps_d2;       // {0.001, 0.0001, 0.00001}
};

GridRanges default_grid(ModelFamily family);
GridRanges apply_overrides(ModelFamily family, const GridRanges& overrides);

// Initial-training grid: (L, S, eps_d1) points with eps_d2 left unset.
std::vector<HyperParams> phase1_grid(ModelFamily family, const GridRanges& ranges);
// Full grid including eps_d2, as scanned by the prescient strategy.
std::vector<HyperParams> full_grid(ModelFamily family, const GridRanges& ranges);

// Network topology for a grid point. Fully-connected families stack
// hidden_layers blocks of layer_size units; conv families use the fixed
// 32/64-filter topology. Dropout rates are 0.2 on the input and 0.5 on
// hidden layers for fc-family nets, a single 0.5 for conv.
NetworkSpec make_model_spec(const HyperParams& hp, Index num_classes = 10);

}  // namespace cfb
