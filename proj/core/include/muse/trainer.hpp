// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "muse/dataset.hpp"
#include "muse/metrics.hpp"
#include "muse/model.hpp"

namespace muse {

/// Raised when a step produces a non-finite loss. `diagnostic` lists the
/// offending batch and the parameters whose gradients went bad.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, std::string diagnostic);
  std::size_t step() const { return step_; }
  const std::string& diagnostic() const { return diagnostic_; }

 private:
  std::size_t step_;
  std::string diagnostic_;
};

struct TrainOptions {
  /// Where to write the diagnostic dump on divergence. Empty disables it.
  std::filesystem::path dump_dir;
  /// Called after every step with (step, loss).
  std::function<void(std::size_t, double)> on_step;
};

struct TrainResult {
  MuseModel model;
  std::vector<double> loss_curve;  // loss before each update
  std::vector<double> temperature_curve;
};

/// Deterministic batch order: one shuffle of the train split per epoch.
std::vector<std::vector<std::size_t>> make_batches(const Config& cfg, const SyntheticPairSet& data);

/// Contrastive loss of one batch under `model`; fills `grads` when given.
double batch_loss(const MuseModel& model, const SyntheticPairSet& data, const std::vector<std::size_t>& batch,
                  Gradients* grads = nullptr);

TrainResult train(const Config& cfg, const SyntheticPairSet& data, const TrainOptions& options = {});

/// Text-to-video similarity on `indices`: rows are texts, columns videos.
SimilarityMatrix text_to_video(const MuseModel& model, const SyntheticPairSet& data,
                               const std::vector<std::size_t>& indices);

RetrievalReport evaluate(const MuseModel& model, const SyntheticPairSet& data);

}  // namespace muse
