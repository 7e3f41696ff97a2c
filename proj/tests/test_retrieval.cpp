// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "muse/error.hpp"
#include "muse/grad_check.hpp"
#include "muse/ops.hpp"
#include "muse/retrieval.hpp"

namespace muse {
namespace {

double norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

TEST(PoolVideo, ConstantTokensGiveTheirDirection) {
  const SequenceLayout layout = make_layout(AggregationMode::ScaleWise, ScaleSet{{1, 3}, 3}, 2);
  Tensor tokens(Shape{layout.length(), 3});
  for (std::size_t i = 0; i < layout.length(); ++i) {
    tokens.at({i, 0}) = 1.0;
    tokens.at({i, 1}) = -2.0;
    tokens.at({i, 2}) = 2.0;
  }
  for (PoolingStrategy s : {PoolingStrategy::MeanAll, PoolingStrategy::MeanScale1}) {
    const Embedding e = pool_video(tokens, layout, s);
    EXPECT_NEAR(e.vector[0], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(e.vector[1], -2.0 / 3.0, 1e-15);
    EXPECT_NEAR(norm(e.vector), 1.0, 1e-12);
  }
}

TEST(PoolVideo, MeanScale1AveragesOnlyScaleOneTokens) {
  const SequenceLayout layout = make_layout(AggregationMode::FrameWise, ScaleSet{}, 12);
  Rng rng(1);
  Tensor tokens = rng.normal_tensor({layout.length(), 2});
  Tensor expected(Shape{2}, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < layout.length(); ++i) {
    if (layout.coords[i].scale != 1) continue;
    ++count;
    expected[0] += tokens.at({i, 0});
    expected[1] += tokens.at({i, 1});
  }
  EXPECT_EQ(count, 12u);
  const double n = norm(expected);
  const Embedding e = pool_video(tokens, layout, PoolingStrategy::MeanScale1);
  EXPECT_NEAR(e.vector[0], expected[0] / n, 1e-12);
  EXPECT_NEAR(e.vector[1], expected[1] / n, 1e-12);
}

TEST(PoolVideo, MeanAllMatchesColumnMean) {
  Rng rng(2);
  const SequenceLayout layout = make_layout(AggregationMode::ScaleWise, ScaleSet{{1, 3}, 3}, 2);
  const Tensor tokens = rng.normal_tensor({20, 5});
  Tensor mean(Shape{5}, 0.0);
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t c = 0; c < 5; ++c) mean[c] += tokens.at({i, c}) / 20.0;
  }
  const double n = norm(mean);
  const Embedding e = pool_video(tokens, layout, PoolingStrategy::MeanAll);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(e.vector[c], mean[c] / n, 1e-12);
}

TEST(PoolVideo, NoScaleOneTokensIsConfigError) {
  const SequenceLayout layout = make_layout(AggregationMode::ScaleWise, ScaleSet{{3, 7}, 7}, 2);
  Rng rng(3);
  EXPECT_THROW(pool_video(rng.normal_tensor({layout.length(), 2}), layout, PoolingStrategy::MeanScale1), ConfigError);
  EXPECT_THROW(parse_pooling("max"), ConfigError);
}

TEST(Similarity, EntriesAreCosines) {
  Rng rng(4);
  Graph g;
  Var a = ops::l2_normalize_rows(g.constant(rng.normal_tensor({6, 4})));
  Var b = ops::l2_normalize_rows(g.constant(rng.normal_tensor({5, 4})));
  const Tensor s = similarity(a, b).value();
  EXPECT_EQ(s.shape(), (Shape{6, 5}));
  for (double v : s.data()) {
    EXPECT_LE(v, 1.0 + 1e-9);
    EXPECT_GE(v, -1.0 - 1e-9);
  }
  EXPECT_NEAR(similarity(a, a).value().at({3, 3}), 1.0, 1e-12);
}

TEST(InfoNce, UniformSimilaritiesGiveLogB) {
  const SimilarityMatrix sim = SimilarityMatrix::paired(Tensor(Shape{8, 8}, 0.3));
  EXPECT_NEAR(info_nce(sim, 0.07, false), 2.0794, 5e-5);
  EXPECT_NEAR(info_nce(sim, 0.07, true), std::log(8.0), 1e-12);
}

TEST(InfoNce, HandComputedTwoByTwo) {
  const SimilarityMatrix sim = SimilarityMatrix::paired(Tensor::matrix({{0.9, 0.1}, {0.2, 0.8}}));
  // -ln softmax of the matched entry, row by row.
  const double row0 = -std::log(std::exp(0.9) / (std::exp(0.9) + std::exp(0.1)));
  const double row1 = -std::log(std::exp(0.8) / (std::exp(0.2) + std::exp(0.8)));
  EXPECT_NEAR(info_nce(sim, 1.0, false), 0.5 * (row0 + row1), 1e-14);
  EXPECT_NEAR(info_nce(sim, 1.0, false), 0.4043, 5e-5);
  const double col = std::log(1.0 + std::exp(-0.7));
  EXPECT_NEAR(info_nce(sim, 1.0, true), 0.5 * (0.5 * (row0 + row1) + col), 1e-14);
}

TEST(InfoNce, SaturatesToZero) {
  Tensor v(Shape{4, 4}, -1.0);
  for (std::size_t i = 0; i < 4; ++i) v.at({i, i}) = 1.0;
  const SimilarityMatrix sim = SimilarityMatrix::paired(v);
  EXPECT_LT(info_nce(sim, 1e-2, true), 1e-80);
  EXPECT_GT(info_nce(sim, 0.5, true), info_nce(sim, 0.1, true));
}

TEST(InfoNce, RowShiftInvariance) {
  Rng rng(5);
  Tensor v = rng.normal_tensor({5, 5});
  const double base = info_nce(SimilarityMatrix::paired(v), 0.3, false);
  for (std::size_t j = 0; j < 5; ++j) v.at({2, j}) += 0.75;
  EXPECT_NEAR(info_nce(SimilarityMatrix::paired(v), 0.3, false), base, 1e-12);
  EXPECT_GE(base, 0.0);
}

TEST(InfoNce, NonPositiveTemperatureIsDomainError) {
  const SimilarityMatrix sim = SimilarityMatrix::paired(Tensor(Shape{2, 2}, 0.0));
  EXPECT_THROW(info_nce(sim, 0.0, false), DomainError);
  EXPECT_THROW(info_nce(sim, -1.0, true), DomainError);
}

TEST(InfoNce, SymmetricNeedsSquareMatrix) {
  SimilarityMatrix sim;
  sim.values = Tensor(Shape{2, 3}, 0.0);
  sim.truth = {0, 1};
  EXPECT_NO_THROW(info_nce(sim, 1.0, false));
  EXPECT_THROW(info_nce(sim, 1.0, true), std::logic_error);
}

TEST(InfoNce, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (bool symmetric : {false, true}) {
    const GradCheckReport r = grad_check(
        [symmetric](Graph&, std::span<const Var> in) { return info_nce(in[0], in[1], {0, 1, 2, 3}, symmetric); },
        {rng.normal_tensor({4, 4}, 0.5), Tensor::scalar(0.4)}, 1e-5, 1e-6);
    EXPECT_TRUE(r.passed) << "symmetric=" << symmetric << " rel err " << r.max_rel_error;
  }
}

}  // namespace
}  // namespace muse
