// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "muse/config.hpp"
#include "muse/tensor.hpp"

namespace muse {

/// Paired synthetic videos and text embeddings.
///
/// Each video is a (T, G, G, C) grid of iid Gaussian background tokens.
/// Its pattern m owns a signal vector u_m, which is added to every cell of
/// one random k x k patch in a random subset of frames (at least one).
/// Every frame is then re-centred to zero mean per channel, so global
/// mean pooling sees no trace of the pattern. The text of a video is
/// u_m / |u_m| plus Gaussian noise, re-normalized.
struct SyntheticPairSet {
  std::vector<Tensor> videos;           // (T, G, G, C) each
  Tensor texts;                         // (pairs, C), unit rows
  std::vector<std::size_t> pattern_of;  // pattern id per pair
  std::vector<std::size_t> train;       // indices into videos
  std::vector<std::size_t> test;

  std::size_t size() const { return videos.size(); }
};

/// Throws ConfigError when the patch does not fit the grid.
SyntheticPairSet gen_data(const Config& cfg);

/// Directory layout: videos.bin (pairs, T, G, G, C), texts.bin (pairs, C),
/// patterns.bin (pairs), split.bin (pairs; 0 train, 1 test). All files use
/// the binary tensor format.
void save_dataset(const std::filesystem::path& dir, const SyntheticPairSet& data);
SyntheticPairSet load_dataset(const std::filesystem::path& dir);

}  // namespace muse
