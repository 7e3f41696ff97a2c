// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>

#include "muse/aggregator.hpp"
#include "muse/config.hpp"
#include "muse/pyramid.hpp"
#include "muse/ssm.hpp"

namespace muse {

/// Pyramid generator, aggregator layout, ResMamba learner and the learnable
/// log-temperature of the contrastive head, all parameters in one store.
struct MuseModel {
  Config config;
  ParamStore store;
  PyramidParams pyramid;
  ResMambaStack learner;
  SequenceLayout layout;
  ParamId log_tau = 0;

  /// Deterministic initialization from `config.seed`.
  static MuseModel create(const Config& config);

  /// (T, G, G, C) video -> unit (C) embedding.
  Var encode(Graph& g, Var video) const;
  /// Learner output (L_total, C) before pooling.
  Var encode_tokens(Graph& g, Var video) const;
  /// Inference: stacks embeddings of `videos` into (n, C).
  Tensor encode_all(std::span<const Tensor> videos) const;

  Var temperature(Graph& g) const;
  double temperature() const;

  void save(const std::filesystem::path& path) const;
  /// Loads parameters into a model built from `config`; throws ConfigError
  /// when names or shapes in the checkpoint do not match.
  static MuseModel load(const std::filesystem::path& path, const Config& config);
};

}  // namespace muse
