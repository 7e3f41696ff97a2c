// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "muse/autograd.hpp"
#include "muse/pyramid.hpp"

namespace muse {

enum class AggregationMode { ScaleWise, FrameWise, SpatialWise };

std::string to_string(AggregationMode mode);
/// Accepts "scale", "frame", "spatial".
AggregationMode parse_aggregation(const std::string& text);

/// Pyramid coordinate of one sequence position. `frame` is -1 for
/// temporally pooled (spatial-wise) sequences.
struct TokenCoord {
  std::size_t scale = 0;
  int frame = 0;
  std::size_t row = 0;
  std::size_t col = 0;

  friend bool operator==(const TokenCoord&, const TokenCoord&) = default;
};

/// Position table of an aggregated sequence.
///
/// Canonical pyramid order is scale-major, then frame, then row-major
/// spatial position (the order of concatenating every scale's flattened
/// grid). `source[i]` is the canonical index feeding sequence position i
/// and `inverse[c]` is the sequence position holding canonical index c.
struct SequenceLayout {
  AggregationMode mode = AggregationMode::ScaleWise;
  ScaleSet scales;
  std::size_t frames = 0;
  std::vector<TokenCoord> coords;
  std::vector<std::size_t> source;
  std::vector<std::size_t> inverse;

  std::size_t length() const { return coords.size(); }
};

SequenceLayout make_layout(AggregationMode mode, const ScaleSet& scales, std::size_t frames);

struct AggregatedSequence {
  Tensor tokens;  // (L_total, C)
  SequenceLayout layout;
};

/// Flattens per-scale (T, s, s, C) grids into one (L_total, C) sequence.
Var aggregate(std::span<const Var> per_scale, const SequenceLayout& layout);

AggregatedSequence aggregate(const PyramidFeatures& pyramid, AggregationMode mode);

/// Exact inverse of `aggregate` for scale-wise and frame-wise sequences.
/// Throws ContractError for spatial-wise sequences (temporal mean is lossy).
PyramidFeatures disaggregate(const AggregatedSequence& seq);

}  // namespace muse
