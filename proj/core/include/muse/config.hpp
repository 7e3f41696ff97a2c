// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "muse/aggregator.hpp"
#include "muse/pyramid.hpp"
#include "muse/retrieval.hpp"
#include "muse/ssm.hpp"

namespace muse {

/// Every knob of a run. Serialized as a flat `key = value` text file;
/// `#` starts a comment. A run is reproducible from this alone.
struct Config {
  std::uint64_t seed = 0;

  // Input grid and pyramid.
  std::size_t frames = 2;
  std::size_t grid = 14;
  std::size_t channels = 16;
  std::string scales = "1,3,7,14";
  std::size_t conv_stages = 2;
  AggregationMode aggregation = AggregationMode::ScaleWise;

  // Learner.
  std::size_t layers = 1;
  ScanVariant variant = ScanVariant::V2;
  BlockKind block = BlockKind::Mamba;
  bool residual = true;
  std::size_t d_state = 8;
  std::size_t expand = 2;
  std::size_t conv_kernel = 4;

  // Retrieval head.
  PoolingStrategy pooling = PoolingStrategy::MeanAll;
  double temperature_init = 0.07;
  bool symmetric_loss = false;

  // Optimization.
  std::size_t batch_size = 8;
  std::size_t steps = 500;
  double learning_rate = 0.05;
  double momentum = 0.9;
  /// Global gradient-norm clip; 0 disables it.
  double grad_clip = 1.0;

  // Synthetic data.
  std::size_t patterns = 32;
  std::size_t train_pairs = 512;
  std::size_t test_pairs = 100;
  std::size_t patch_size = 3;
  double amplitude = 1.5;
  double background_noise = 1.0;
  double text_noise = 0.005;
  double patch_frame_prob = 0.5;

  ScaleSet scale_set() const;
  SsmConfig ssm_config() const;

  /// Throws ConfigError on any invalid value or combination.
  void validate() const;

  std::string to_text() const;
  /// Starts from defaults and applies every `key = value` line of `text`.
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Applies one override; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  friend bool operator==(const Config&, const Config&) = default;
};

}  // namespace muse
