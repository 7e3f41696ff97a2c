// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "muse/error.hpp"
#include "muse/metrics.hpp"
#include "muse/rng.hpp"

namespace muse {
namespace {

// Stable sort by descending score keeps earlier columns first among ties,
// which is the pessimistic-by-index rule.
std::size_t sorted_rank(std::span<const double> scores, std::size_t truth) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), truth) - order.begin()) + 1;
}

TEST(RankOfTruth, Examples) {
  const std::vector<double> a{0.1, 0.9, 0.5};
  EXPECT_EQ(rank_of_truth(a, 1), 1u);
  const std::vector<double> ties{0.5, 0.5, 0.5};
  EXPECT_EQ(rank_of_truth(ties, 2), 3u);
  EXPECT_EQ(rank_of_truth(ties, 0), 1u);
  EXPECT_THROW(rank_of_truth(ties, 3), ContractError);
}

TEST(RankOfTruth, MatchesSortOracleWithTies) {
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> s(12);
    for (double& v : s) v = std::round(rng.uniform(0.0, 4.0)) / 4.0;  // heavy ties
    for (std::size_t t = 0; t < s.size(); ++t) EXPECT_EQ(rank_of_truth(s, t), sorted_rank(s, t));
  }
}

TEST(Report, PerfectAndWorstCase) {
  Tensor eye(Shape{5, 5}, 0.0);
  for (std::size_t i = 0; i < 5; ++i) eye.at({i, i}) = 1.0;
  const RetrievalReport best = make_report(SimilarityMatrix::paired(eye));
  EXPECT_EQ(best.recall_at.at(1), 100.0);
  EXPECT_EQ(best.median_rank, 1.0);
  EXPECT_EQ(best.mean_rank, 1.0);

  Tensor anti(Shape{6, 6}, 1.0);
  for (std::size_t i = 0; i < 6; ++i) anti.at({i, i}) = -1.0;
  const RetrievalReport worst = make_report(SimilarityMatrix::paired(anti));
  EXPECT_EQ(worst.recall_at.at(1), 0.0);
  EXPECT_EQ(worst.recall_at.at(5), 0.0);
  EXPECT_EQ(worst.recall_at.at(10), 100.0);
  EXPECT_EQ(worst.mean_rank, 6.0);
}

TEST(Report, EvenCountMedianAveragesTheMiddle) {
  // Row ranks 1, 2, 3, 4.
  const Tensor v = Tensor::matrix({{4, 3, 2, 1}, {4, 3, 2, 1}, {4, 3, 2, 1}, {4, 3, 2, 1}});
  const RetrievalReport r = make_report(SimilarityMatrix::paired(v));
  EXPECT_EQ(r.ranks, (std::vector<std::size_t>{1, 2, 3, 4}));
  EXPECT_EQ(r.median_rank, 2.5);
  EXPECT_EQ(r.mean_rank, 2.5);
  EXPECT_EQ(r.recall_at.at(1), 25.0);
}

TEST(Report, RandomMatricesMatchOracle) {
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const Tensor v = rng.normal_tensor({10, 10});
    const RetrievalReport r = make_report(SimilarityMatrix::paired(v));
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(r.ranks[i], sorted_rank(std::span<const double>(v.ptr() + i * 10, 10), i));
    }
    EXPECT_LE(r.recall_at.at(1), r.recall_at.at(5));
    EXPECT_LE(r.recall_at.at(5), r.recall_at.at(10));
    EXPECT_EQ(r.recall_at.at(10), 100.0);
  }
}

TEST(Report, MonotoneTransformAndPermutationInvariance) {
  Rng rng(3);
  Tensor v = rng.normal_tensor({8, 8});
  const RetrievalReport base = make_report(SimilarityMatrix::paired(v));
  Tensor t = v;
  for (double& x : t.data()) x = std::exp(3.0 * x) - 7.0;
  const RetrievalReport transformed = make_report(SimilarityMatrix::paired(t));
  EXPECT_EQ(transformed.ranks, base.ranks);

  // Reverse query order; truth indices follow their rows.
  SimilarityMatrix permuted;
  permuted.values = Tensor(Shape{8, 8});
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) permuted.values.at({i, j}) = v.at({7 - i, j});
    permuted.truth.push_back(7 - i);
  }
  const RetrievalReport p = make_report(permuted);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(p.ranks[i], base.ranks[7 - i]);
  EXPECT_EQ(p.median_rank, base.median_rank);
  EXPECT_EQ(p.mean_rank, base.mean_rank);
  EXPECT_EQ(p.recall_at, base.recall_at);
}

TEST(Report, RecallByTopKMembershipAgrees) {
  Rng rng(4);
  Tensor v = rng.normal_tensor({12, 12});
  for (double& x : v.data()) x = std::round(x * 2.0) / 2.0;
  const RetrievalReport r = make_report(SimilarityMatrix::paired(v));
  for (std::size_t K : {1u, 5u, 10u}) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < 12; ++i) {
      std::span<const double> row(v.ptr() + i * 12, 12);
      std::vector<std::size_t> order(12);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
      if (std::find(order.begin(), order.begin() + K, i) != order.begin() + K) ++hits;
    }
    EXPECT_DOUBLE_EQ(r.recall_at.at(K), 100.0 * static_cast<double>(hits) / 12.0);
  }
}

TEST(Report, EmptyMatrixIsContractError) {
  SimilarityMatrix empty;
  EXPECT_THROW(make_report(empty), ContractError);
}

TEST(Report, JsonKeysAndRoundTrip) {
  const Tensor v = Tensor::matrix({{1, 0}, {1, 0}});
  const RetrievalReport r = make_report(SimilarityMatrix::paired(v));
  const nlohmann::json j = r.to_json();
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  std::sort(keys.begin(), keys.end());
  EXPECT_EQ(keys, (std::vector<std::string>{"mdr", "mnr", "r1", "r10", "r5", "ranks"}));
  EXPECT_EQ(j["ranks"], (std::vector<std::size_t>{1, 2}));
  const RetrievalReport back = RetrievalReport::from_json(j);
  EXPECT_EQ(back.ranks, r.ranks);
  EXPECT_EQ(back.recall_at, r.recall_at);
}

}  // namespace
}  // namespace muse
