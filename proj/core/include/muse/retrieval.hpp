// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "muse/aggregator.hpp"
#include "muse/autograd.hpp"

namespace muse {

enum class PoolingStrategy { MeanAll, MeanScale1 };

std::string to_string(PoolingStrategy p);
/// Accepts "mean_all", "mean_scale1".
PoolingStrategy parse_pooling(const std::string& text);

/// Unit-norm vector.
struct Embedding {
  Tensor vector;

  /// Normalizes `raw`; throws DomainError on a zero vector.
  static Embedding from(const Tensor& raw);
};

/// Cosine similarities of queries (rows) against candidates (columns);
/// truth[i] is the matching column of row i.
struct SimilarityMatrix {
  Tensor values;
  std::vector<std::size_t> truth;

  std::size_t rows() const { return values.dim(0); }
  std::size_t cols() const { return values.dim(1); }
  /// Paired batch: row i matches column i.
  static SimilarityMatrix paired(Tensor values);
};

inline constexpr double kPoolNormFloor = 1e-8;

/// Reduces learner output (L_total, C) to one unit-norm (C) vector. A zero
/// mean maps to the zero vector instead of failing.
/// Throws ConfigError when MeanScale1 selects no tokens.
Var pool_video(Var tokens, const SequenceLayout& layout, PoolingStrategy strategy);
Embedding pool_video(const Tensor& tokens, const SequenceLayout& layout, PoolingStrategy strategy);

/// Rows of `queries` against rows of `candidates`; both hold unit vectors.
Var similarity(Var queries, Var candidates);
Tensor similarity(const Tensor& queries, const Tensor& candidates);

/// Contrastive cross-entropy with temperature `tau` (scalar variable):
/// mean over rows of -log softmax(sim / tau)[truth]. The symmetric form
/// averages the row-wise and column-wise terms and needs a square matrix
/// with diagonal truth. Throws DomainError when tau <= 0.
Var info_nce(Var sim, Var tau, const std::vector<std::size_t>& truth, bool symmetric);
double info_nce(const SimilarityMatrix& sim, double tau, bool symmetric);

inline constexpr double kTauMin = 1e-3;
inline constexpr double kTauMax = 1.0;

}  // namespace muse
