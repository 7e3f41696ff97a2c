// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/retrieval.hpp"

#include <cmath>
#include <numeric>

#include "muse/error.hpp"
#include "muse/ops.hpp"

namespace muse {

std::string to_string(PoolingStrategy p) { return p == PoolingStrategy::MeanAll ? "mean_all" : "mean_scale1"; }

PoolingStrategy parse_pooling(const std::string& text) {
  if (text == "mean_all") return PoolingStrategy::MeanAll;
  if (text == "mean_scale1") return PoolingStrategy::MeanScale1;
  throw ConfigError("unknown pooling '" + text + "' (expected mean_all|mean_scale1)");
}

Embedding Embedding::from(const Tensor& raw) {
  Graph g(Graph::Mode::Inference);
  return Embedding{ops::l2_normalize_rows(g.constant(raw)).value()};
}

SimilarityMatrix SimilarityMatrix::paired(Tensor values) {
  if (values.rank() != 2 || values.dim(0) != values.dim(1)) {
    throw DimensionError("paired similarity needs a square matrix, got " + shape_str(values.shape()));
  }
  std::vector<std::size_t> truth(values.dim(0));
  std::iota(truth.begin(), truth.end(), 0);
  return SimilarityMatrix{std::move(values), std::move(truth)};
}

Var pool_video(Var tokens, const SequenceLayout& layout, PoolingStrategy strategy) {
  const Tensor& T = tokens.value();
  if (T.rank() != 2 || T.dim(0) != layout.length()) {
    throw DimensionError("pool_video: tokens " + shape_str(T.shape()) + " vs layout length " +
                         std::to_string(layout.length()));
  }
  Var pooled;
  if (strategy == PoolingStrategy::MeanAll) {
    pooled = ops::mean_rows(tokens);
  } else {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < layout.coords.size(); ++i) {
      if (layout.coords[i].scale == 1) rows.push_back(i);
    }
    if (rows.empty()) throw ConfigError("pool_video: mean_scale1 pooling but the layout has no scale-1 tokens");
    pooled = ops::mean_rows(ops::gather_rows(tokens, std::move(rows)));
  }
  // The floor only matters for an all-zero pooled vector, which a stack
  // without residual paths emits at initialization.
  return ops::l2_normalize_rows(pooled, kPoolNormFloor);
}

Embedding pool_video(const Tensor& tokens, const SequenceLayout& layout, PoolingStrategy strategy) {
  Graph g(Graph::Mode::Inference);
  return Embedding{pool_video(g.constant(tokens), layout, strategy).value()};
}

Var similarity(Var queries, Var candidates) { return ops::matmul(queries, ops::transpose(candidates)); }

Tensor similarity(const Tensor& queries, const Tensor& candidates) {
  Graph g(Graph::Mode::Inference);
  return similarity(g.constant(queries), g.constant(candidates)).value();
}

Var info_nce(Var sim, Var tau, const std::vector<std::size_t>& truth, bool symmetric) {
  const double t = tau.value().item();
  if (!(t > 0.0)) throw DomainError("info_nce: temperature must be positive, got " + std::to_string(t));
  const Tensor& S = sim.value();
  if (S.rank() != 2) throw DimensionError("info_nce: similarity must be a matrix");
  Var logits = ops::mul(sim, ops::reciprocal(tau));
  Var rows = ops::cross_entropy_rows(logits, truth);
  if (!symmetric) return rows;
  if (S.dim(0) != S.dim(1)) throw DimensionError("info_nce: symmetric loss needs a square matrix");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != i) throw ContractError("info_nce: symmetric loss needs diagonal ground truth");
  }
  Var cols = ops::cross_entropy_rows(ops::transpose(logits), truth);
  return ops::scale(ops::add(rows, cols), 0.5);
}

double info_nce(const SimilarityMatrix& sim, double tau, bool symmetric) {
  Graph g(Graph::Mode::Inference);
  return info_nce(g.constant(sim.values), g.constant(Tensor::scalar(tau)), sim.truth, symmetric).value().item();
}

}  // namespace muse
