// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "muse/ssm.hpp"

namespace muse::bench {

/// Analytic multiply-add accounting for one forward pass of a gated
/// residual layer (variant none) over L tokens, C channels, inner width E,
/// state size N and conv kernel k:
///
///   shared    : in_proj L*C*2E + out_proj L*E*C + gate L*C*C
///   mamba     : conv L*E*k + step proj L*E*E + B/C proj 2*L*E*N
///               + scan 4*L*E*N + L*E
///   mambaout  : conv L*E*k
///   attention : q/k/v proj 3*L*E*E + scores L*L*E + mixing L*L*E
///
/// Elementwise work (activations, norms, softmax) is not modelled; the
/// instrumented count includes it.
struct CostModel {
  BlockKind kind = BlockKind::Mamba;
  std::size_t length = 0;
  std::size_t channels = 0;
  std::size_t inner = 0;
  std::size_t state = 0;
  std::size_t conv_kernel = 0;
  std::uint64_t predicted_madds = 0;
  std::uint64_t measured_madds = 0;
  std::int64_t peak_scalars = 0;
  double wall_ms = 0.0;
};

/// The terms of `predict_cost` proportional to L^2.
std::uint64_t quadratic_madds(BlockKind kind, std::size_t L, std::size_t E);

CostModel predict_cost(BlockKind kind, std::size_t L, std::size_t C, std::size_t E, std::size_t N,
                       std::size_t conv_kernel = 4);

/// Rough live-scalar estimate used to skip configurations over budget.
std::uint64_t estimate_peak_scalars(BlockKind kind, std::size_t L, std::size_t C, std::size_t E, std::size_t N);

/// Runs one taped forward pass of a freshly initialized layer on random
/// input under instrument counters and fills the measured fields.
CostModel measure_cost(BlockKind kind, std::size_t L, std::size_t C, std::size_t E, std::size_t N,
                       std::size_t conv_kernel = 4, std::uint64_t seed = 0);

struct SweepOptions {
  std::vector<BlockKind> kinds{BlockKind::Mamba, BlockKind::MambaOut, BlockKind::Attention};
  std::vector<std::size_t> frames{4, 8, 12, 16};
  std::size_t tokens_per_frame = 255;
  std::size_t channels = 64;
  std::size_t expand = 2;
  std::size_t d_state = 16;
  std::size_t conv_kernel = 4;
  /// Configurations whose estimated peak exceeds this many scalars are skipped.
  std::uint64_t scalar_budget = 400'000'000;
  std::uint64_t seed = 0;
};

struct SweepRow {
  CostModel cost;
  std::size_t frames = 0;
  bool skipped = false;
};

struct SweepResult {
  SweepOptions options;
  std::vector<SweepRow> rows;
  std::vector<std::string> notices;
};

/// Throws ConfigError unless frames are strictly ascending.
SweepResult sweep(const SweepOptions& options);

/// Columns: kind, frames, tokens, predicted_madds, measured_madds, peak_scalars, wall_ms.
void write_csv(std::ostream& out, const SweepResult& result);

/// Growth ratios for every (L, 2L) pair per kind plus the assertions
/// attention > 3.2 and scan < 2.3 for L >= 2048. Wall time is omitted.
nlohmann::json summary_json(const SweepResult& result);

}  // namespace muse::bench
