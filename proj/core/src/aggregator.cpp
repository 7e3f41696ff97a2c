// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/aggregator.hpp"

#include <algorithm>

#include "muse/error.hpp"
#include "muse/ops.hpp"

namespace muse {

std::string to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::ScaleWise: return "scale";
    case AggregationMode::FrameWise: return "frame";
    case AggregationMode::SpatialWise: return "spatial";
  }
  return "?";
}

AggregationMode parse_aggregation(const std::string& text) {
  if (text == "scale") return AggregationMode::ScaleWise;
  if (text == "frame") return AggregationMode::FrameWise;
  if (text == "spatial") return AggregationMode::SpatialWise;
  throw ConfigError("unknown aggregation '" + text + "' (expected scale|frame|spatial)");
}

SequenceLayout make_layout(AggregationMode mode, const ScaleSet& scales, std::size_t frames) {
  scales.validate();
  if (frames == 0) throw ConfigError("frame count must be positive");
  SequenceLayout layout;
  layout.mode = mode;
  layout.scales = scales;
  layout.frames = frames;

  const std::size_t pooled_frames = mode == AggregationMode::SpatialWise ? 1 : frames;
  // Canonical offset of (scale k, frame t) block.
  std::vector<std::size_t> block_offset;
  std::size_t offset = 0;
  for (std::size_t s : scales.scales) {
    for (std::size_t t = 0; t < pooled_frames; ++t) {
      block_offset.push_back(offset);
      offset += s * s;
    }
  }

  auto emit = [&](std::size_t k, std::size_t t) {
    const std::size_t s = scales.scales[k];
    const int frame = mode == AggregationMode::SpatialWise ? -1 : static_cast<int>(t);
    for (std::size_t r = 0; r < s; ++r) {
      for (std::size_t c = 0; c < s; ++c) {
        layout.coords.push_back(TokenCoord{s, frame, r, c});
        layout.source.push_back(block_offset[k * pooled_frames + t] + r * s + c);
      }
    }
  };

  if (mode == AggregationMode::FrameWise) {
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t k = 0; k < scales.scales.size(); ++k) emit(k, t);
    }
  } else {
    for (std::size_t k = 0; k < scales.scales.size(); ++k) {
      for (std::size_t t = 0; t < pooled_frames; ++t) emit(k, t);
    }
  }

  layout.inverse.assign(layout.source.size(), 0);
  for (std::size_t i = 0; i < layout.source.size(); ++i) layout.inverse[layout.source[i]] = i;
  return layout;
}

Var aggregate(std::span<const Var> per_scale, const SequenceLayout& layout) {
  const auto& scales = layout.scales.scales;
  if (per_scale.size() != scales.size()) throw DimensionError("aggregate: one grid per scale required");
  std::vector<Var> blocks;
  std::size_t channels = 0;
  for (std::size_t k = 0; k < scales.size(); ++k) {
    const Tensor& grid = per_scale[k].value();
    const std::size_t s = scales[k];
    if (grid.rank() != 4 || grid.dim(0) != layout.frames || grid.dim(1) != s || grid.dim(2) != s) {
      throw DimensionError("aggregate: scale " + std::to_string(s) + " grid has shape " + shape_str(grid.shape()));
    }
    channels = grid.dim(3);
    if (layout.mode == AggregationMode::SpatialWise) {
      Var flat = ops::reshape(per_scale[k], Shape{layout.frames, s * s * channels});
      blocks.push_back(ops::reshape(ops::mean_rows(flat), Shape{s * s, channels}));
    } else {
      blocks.push_back(ops::reshape(per_scale[k], Shape{layout.frames * s * s, channels}));
    }
  }
  Var canonical = ops::concat_rows(blocks);
  if (layout.mode == AggregationMode::FrameWise) return ops::gather_rows(canonical, layout.source);
  return canonical;
}

AggregatedSequence aggregate(const PyramidFeatures& pyramid, AggregationMode mode) {
  pyramid.validate();
  Graph g(Graph::Mode::Inference);
  std::vector<Var> vars;
  for (const auto& t : pyramid.per_scale) vars.push_back(g.constant(t));
  AggregatedSequence out;
  out.layout = make_layout(mode, pyramid.scales, pyramid.frames);
  out.tokens = aggregate(vars, out.layout).value();
  return out;
}

PyramidFeatures disaggregate(const AggregatedSequence& seq) {
  const SequenceLayout& layout = seq.layout;
  if (layout.mode == AggregationMode::SpatialWise) {
    throw ContractError("disaggregate: spatial-wise sequences are mean-pooled over frames and cannot be inverted");
  }
  const Tensor& tokens = seq.tokens;
  if (tokens.rank() != 2 || tokens.dim(0) != layout.length()) {
    throw DimensionError("disaggregate: tokens " + shape_str(tokens.shape()) + " do not match layout length " +
                         std::to_string(layout.length()));
  }
  const std::size_t C = tokens.dim(1);
  PyramidFeatures out;
  out.scales = layout.scales;
  out.frames = layout.frames;
  out.channels = C;
  std::size_t canonical = 0;
  for (std::size_t s : layout.scales.scales) {
    Tensor grid(Shape{layout.frames, s, s, C});
    for (std::size_t i = 0; i < layout.frames * s * s; ++i, ++canonical) {
      const double* src = tokens.ptr() + layout.inverse[canonical] * C;
      std::copy_n(src, C, grid.ptr() + i * C);
    }
    out.per_scale.push_back(std::move(grid));
  }
  return out;
}

}  // namespace muse
