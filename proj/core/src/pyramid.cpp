// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/pyramid.hpp"

#include <cmath>
#include <sstream>

#include "muse/error.hpp"
#include "muse/ops.hpp"

namespace muse {

void ScaleSet::validate() const {
  if (scales.empty()) throw ConfigError("scale set is empty");
  if (base_grid == 0) throw ConfigError("base grid must be positive");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] == 0) throw ConfigError("scales must be positive");
    if (i > 0 && scales[i] <= scales[i - 1]) {
      throw ConfigError("scales must be strictly increasing without duplicates: " + to_string());
    }
    if (scales[i] > 2 * base_grid) {
      throw ConfigError("scale " + std::to_string(scales[i]) + " exceeds twice the base grid " +
                        std::to_string(base_grid));
    }
  }
}

std::size_t ScaleSet::tokens_per_frame() const {
  std::size_t n = 0;
  for (std::size_t s : scales) n += s * s;
  return n;
}

std::string ScaleSet::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < scales.size(); ++i) os << (i ? "," : "") << scales[i];
  return os.str();
}

ScaleSet ScaleSet::parse(const std::string& text, std::size_t base_grid) {
  ScaleSet out;
  out.scales.clear();
  out.base_grid = base_grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.scales.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ConfigError("bad scale entry '" + item + "'");
    }
  }
  out.validate();
  return out;
}

void PyramidFeatures::validate() const {
  scales.validate();
  if (per_scale.size() != scales.scales.size()) throw DimensionError("pyramid: one tensor per scale required");
  for (std::size_t k = 0; k < per_scale.size(); ++k) {
    const std::size_t s = scales.scales[k];
    if (per_scale[k].shape() != Shape{frames, s, s, channels}) {
      throw DimensionError("pyramid: scale " + std::to_string(s) + " has shape " +
                           shape_str(per_scale[k].shape()));
    }
  }
}

PyramidParams init_pyramid_params(ParamStore& store, const ScaleSet& scales, std::size_t channels, Rng& rng,
                                  std::size_t conv_stages) {
  scales.validate();
  PyramidParams p;
  p.scales = scales;
  p.channels = channels;
  const double stddev = 1.0 / std::sqrt(9.0 * static_cast<double>(channels));
  for (std::size_t s : scales.scales) {
    std::vector<ConvStage> stack;
    for (std::size_t k = 0; k < conv_stages; ++k) {
      const std::string prefix = "pyramid.s" + std::to_string(s) + ".conv" + std::to_string(k) + ".";
      ConvStage st;
      st.weight = store.add(prefix + "weight", rng.normal_tensor(Shape{3, 3, channels, channels}, stddev));
      st.bias = store.add(prefix + "bias", Tensor(Shape{channels}, 0.0));
      st.gamma = store.add(prefix + "gamma", Tensor(Shape{channels}, 1.0));
      st.beta = store.add(prefix + "beta", Tensor(Shape{channels}, 0.0));
      stack.push_back(st);
    }
    p.stages.push_back(std::move(stack));
  }
  return p;
}

Var pyramid_resample(Var features, std::size_t scale) {
  const std::size_t grid = features.value().dim(1);
  if (scale < grid) return ops::pool2d(features, ops::PoolKind::Max, scale, scale);
  if (scale == grid) return features;
  return ops::upsample_nearest(features, scale, scale);
}

std::vector<Var> generate_pyramid(Graph& g, Var features, const ParamStore& store, const PyramidParams& params) {
  params.scales.validate();
  const Tensor& f = features.value();
  if (f.rank() != 4 || f.dim(1) != params.scales.base_grid || f.dim(2) != params.scales.base_grid ||
      f.dim(3) != params.channels) {
    throw DimensionError("generate_pyramid: input " + shape_str(f.shape()) + " does not match grid " +
                         std::to_string(params.scales.base_grid) + " and channels " + std::to_string(params.channels));
  }
  std::vector<Var> out;
  for (std::size_t k = 0; k < params.scales.scales.size(); ++k) {
    Var x = pyramid_resample(features, params.scales.scales[k]);
    for (const ConvStage& st : params.stages[k]) {
      x = ops::conv2d(x, g.param(store, st.weight), 1, 1);
      x = ops::add(x, g.param(store, st.bias));
      x = ops::layer_norm(x, g.param(store, st.gamma), g.param(store, st.beta), kLayerNormEps);
      x = ops::silu(x);
    }
    out.push_back(x);
  }
  return out;
}

PyramidFeatures generate_pyramid(const Tensor& features, const ParamStore& store, const PyramidParams& params) {
  Graph g(Graph::Mode::Inference);
  std::vector<Var> vars = generate_pyramid(g, g.constant(features), store, params);
  PyramidFeatures out;
  out.scales = params.scales;
  out.frames = features.dim(0);
  out.channels = params.channels;
  for (const Var& v : vars) out.per_scale.push_back(v.value());
  return out;
}

}  // namespace muse
