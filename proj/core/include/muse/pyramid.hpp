// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "muse/autograd.hpp"
#include "muse/rng.hpp"

namespace muse {

/// Spatial scales of the pyramid and the side length of the input grid.
struct ScaleSet {
  std::vector<std::size_t> scales{1, 3, 7, 14};
  std::size_t base_grid = 14;

  /// Throws ConfigError unless scales are non-empty, positive, strictly
  /// increasing and no larger than twice the base grid.
  void validate() const;
  /// Sum of s^2 over all scales.
  std::size_t tokens_per_frame() const;
  std::string to_string() const;
  static ScaleSet parse(const std::string& text, std::size_t base_grid);

  friend bool operator==(const ScaleSet&, const ScaleSet&) = default;
};

/// Per-scale token grids, one (T, s, s, C) tensor per scale.
struct PyramidFeatures {
  ScaleSet scales;
  std::size_t frames = 0;
  std::size_t channels = 0;
  std::vector<Tensor> per_scale;

  void validate() const;
};

/// conv(3x3, pad 1) + bias -> layer norm -> SiLU.
struct ConvStage {
  ParamId weight = 0;
  ParamId bias = 0;
  ParamId gamma = 0;
  ParamId beta = 0;
};

struct PyramidParams {
  ScaleSet scales;
  std::size_t channels = 0;
  /// stages[k] is the conv stack of scales.scales[k].
  std::vector<std::vector<ConvStage>> stages;
};

inline constexpr std::size_t kDefaultConvStages = 2;
inline constexpr double kLayerNormEps = 1e-5;

PyramidParams init_pyramid_params(ParamStore& store, const ScaleSet& scales, std::size_t channels, Rng& rng,
                                  std::size_t conv_stages = kDefaultConvStages);

/// Resamples the (T, G, G, C) grid to (T, s, s, C): adaptive max pooling
/// below G, pass-through at G, nearest-neighbour upsampling above G.
Var pyramid_resample(Var features, std::size_t scale);

/// Builds every scale of the pyramid from a (T, G, G, C) grid.
std::vector<Var> generate_pyramid(Graph& g, Var features, const ParamStore& store, const PyramidParams& params);

/// Inference-only convenience wrapper.
PyramidFeatures generate_pyramid(const Tensor& features, const ParamStore& store, const PyramidParams& params);

}  // namespace muse
