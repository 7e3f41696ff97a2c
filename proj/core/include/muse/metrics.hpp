// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "muse/retrieval.hpp"

namespace muse {

struct RetrievalReport {
  std::map<std::size_t, double> recall_at;  // K -> percentage
  double median_rank = 0.0;
  double mean_rank = 0.0;
  std::vector<std::size_t> ranks;

  /// Keys r<K> for each K, then mdr, mnr, ranks.
  nlohmann::json to_json() const;
  static RetrievalReport from_json(const nlohmann::json& j);
};

/// 1 + #{j : s_j > s_truth} + #{j < truth : s_j == s_truth}.
std::size_t rank_of_truth(std::span<const double> scores, std::size_t truth);

/// Throws ContractError on an empty matrix or an out-of-range truth index.
RetrievalReport make_report(const SimilarityMatrix& sim, const std::vector<std::size_t>& ks = {1, 5, 10});

}  // namespace muse
