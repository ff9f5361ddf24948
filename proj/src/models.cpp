#include "cfb/models.hpp"

#include <sstream>
#include <stdexcept>

namespace cfb {

const std::vector<ModelFamily>& all_families() {
  static const std::vector<ModelFamily> families = {ModelFamily::ewc,  ModelFamily::fc,
                                                    ModelFamily::dfc,  ModelFamily::conv,
                                                    ModelFamily::dconv, ModelFamily::lwta};
  return families;
}

std::string family_name(ModelFamily family) {
  switch (family) {
    case ModelFamily::fc: return "fc";
    case ModelFamily::dfc: return "D-fc";
    case ModelFamily::conv: return "conv";
    case ModelFamily::dconv: return "D-conv";
    case ModelFamily::lwta: return "LWTA";
    case ModelFamily::ewc: return "EWC";
  }
  throw std::logic_error("family_name: bad enum value");
}

ModelFamily parse_family(const std::string& name) {
  for (ModelFamily f : all_families())
    if (family_name(f) == name) return f;
  std::string valid;
  for (ModelFamily f : all_families()) valid += (valid.empty() ? "" : ", ") + family_name(f);
  throw std::invalid_argument("unknown model family '" + name + "' (valid: " + valid + ")");
}

bool family_is_conv(ModelFamily family) {
  return family == ModelFamily::conv || family == ModelFamily::dconv;
}

bool family_has_dropout(ModelFamily family) {
  return family == ModelFamily::dfc || family == ModelFamily::dconv ||
         family == ModelFamily::ewc;
}

std::string hyperparams_string(const HyperParams& hp) {
  std::ostringstream os;
  os << family_name(hp.family);
  if (!family_is_conv(hp.family)) os << " L=" << hp.hidden_layers << " S=" << hp.layer_size;
  os << " eps1=" << hp.eps_d1;
  if (hp.eps_d2 > 0.0) os << " eps2=" << hp.eps_d2;
  return os.str();
}

GridRanges default_grid(ModelFamily family) {
  GridRanges g;
  if (!family_is_conv(family)) {
    g.hidden_layers = {2, 3};
    g.layer_sizes = {200, 400, 800};
  } else {
    g.hidden_layers = {2};  // fixed topology; L and S are not scanned
    g.layer_sizes = {0};
  }
  g.eps_d1 = {0.01, 0.001};
  g.eps_d2 = {0.001, 0.0001, 0.00001};
  return g;
}

GridRanges apply_overrides(ModelFamily family, const GridRanges& overrides) {
  GridRanges g = default_grid(family);
  if (!family_is_conv(family)) {
    if (!overrides.hidden_layers.empty()) g.hidden_layers = overrides.hidden_layers;
    if (!overrides.layer_sizes.empty()) g.layer_sizes = overrides.layer_sizes;
  }
  if (!overrides.eps_d1.empty()) g.eps_d1 = overrides.eps_d1;
  if (!overrides.eps_d2.empty()) g.eps_d2 = overrides.eps_d2;
  return g;
}

std::vector<HyperParams> phase1_grid(ModelFamily family, const GridRanges& ranges) {
  std::vector<HyperParams> grid;
  for (int layers : ranges.hidden_layers)
    for (int size : ranges.layer_sizes)
      for (double eps1 : ranges.eps_d1)
        grid.push_back({family, layers, size, eps1, 0.0});
  return grid;
}

std::vector<HyperParams> full_grid(ModelFamily family, const GridRanges& ranges) {
  std::vector<HyperParams> grid;
  for (const HyperParams& p : phase1_grid(family, ranges))
    for (double eps2 : ranges.eps_d2) {
      HyperParams q = p;
      q.eps_d2 = eps2;
      grid.push_back(q);
    }
  return grid;
}

NetworkSpec make_model_spec(const HyperParams& hp, Index num_classes) {
  NetworkSpec spec;
  if (family_is_conv(hp.family)) {
    // In-C1-MP-D-ReLU-C2-MP-D-ReLU-FC-SM on 28x28 images
    spec.input_shape = {28, 28, 1};
    spec.layers.push_back(Conv{32, 5, 1, 2});
    spec.layers.push_back(MaxPool{2});
    if (family_has_dropout(hp.family)) spec.layers.push_back(Dropout{0.5});
    spec.layers.push_back(Relu{});
    spec.layers.push_back(Conv{64, 5, 1, 2});
    spec.layers.push_back(MaxPool{2});
    if (family_has_dropout(hp.family)) spec.layers.push_back(Dropout{0.5});
    spec.layers.push_back(Relu{});
    spec.layers.push_back(FullyConnected{7 * 7 * 64, num_classes});
    spec.layers.push_back(SoftmaxReadout{num_classes});
    return spec;
  }

  // In-FC1-(D)-Act-...-FCn-SM; dropout nets also mask the input at 0.2
  if (hp.hidden_layers < 1) throw std::invalid_argument("make_model_spec: need hidden layers");
  if (hp.layer_size < 1) throw std::invalid_argument("make_model_spec: need a layer size");
  const bool dropout = family_has_dropout(hp.family);
  const bool lwta = hp.family == ModelFamily::lwta;
  spec.input_shape = {784};
  if (dropout) spec.layers.push_back(Dropout{0.2});
  Index in_dim = 784;
  for (int l = 0; l < hp.hidden_layers; ++l) {
    spec.layers.push_back(FullyConnected{in_dim, hp.layer_size});
    if (dropout) spec.layers.push_back(Dropout{0.5});
    if (lwta)
      spec.layers.push_back(Lwta{2});
    else
      spec.layers.push_back(Relu{});
    in_dim = hp.layer_size;
  }
  spec.layers.push_back(FullyConnected{in_dim, num_classes});
  spec.layers.push_back(SoftmaxReadout{num_classes});
  return spec;
}

}  // namespace cfb
