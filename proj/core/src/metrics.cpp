// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/metrics.hpp"

#include <algorithm>
#include <string>

#include "muse/error.hpp"

namespace muse {

std::size_t rank_of_truth(std::span<const double> scores, std::size_t truth) {
  if (truth >= scores.size()) throw ContractError("rank_of_truth: truth index out of range");
  const double target = scores[truth];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > target || (j < truth && scores[j] == target)) ++rank;
  }
  return rank;
}

RetrievalReport make_report(const SimilarityMatrix& sim, const std::vector<std::size_t>& ks) {
  if (sim.values.rank() != 2 || sim.values.empty()) throw ContractError("make_report: empty similarity matrix");
  const std::size_t rows = sim.rows(), cols = sim.cols();
  if (sim.truth.size() != rows) throw ContractError("make_report: ground truth must cover every row");

  RetrievalReport rep;
  rep.ranks.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    rep.ranks.push_back(rank_of_truth(std::span<const double>(sim.values.ptr() + i * cols, cols), sim.truth[i]));
  }
  for (std::size_t k : ks) {
    const auto hits = std::count_if(rep.ranks.begin(), rep.ranks.end(), [k](std::size_t r) { return r <= k; });
    rep.recall_at[k] = 100.0 * static_cast<double>(hits) / static_cast<double>(rows);
  }
  std::vector<std::size_t> sorted = rep.ranks;
  std::sort(sorted.begin(), sorted.end());
  rep.median_rank = rows % 2 == 1 ? static_cast<double>(sorted[rows / 2])
                                  : 0.5 * static_cast<double>(sorted[rows / 2 - 1] + sorted[rows / 2]);
  double total = 0.0;
  for (std::size_t r : rep.ranks) total += static_cast<double>(r);
  rep.mean_rank = total / static_cast<double>(rows);
  return rep;
}

nlohmann::json RetrievalReport::to_json() const {
  nlohmann::json j;
  for (const auto& [k, v] : recall_at) j["r" + std::to_string(k)] = v;
  j["mdr"] = median_rank;
  j["mnr"] = mean_rank;
  j["ranks"] = ranks;
  return j;
}

RetrievalReport RetrievalReport::from_json(const nlohmann::json& j) {
  RetrievalReport rep;
  for (const auto& [key, value] : j.items()) {
    if (key.size() > 1 && key[0] == 'r' && key != "ranks") rep.recall_at[std::stoul(key.substr(1))] = value.get<double>();
  }
  rep.median_rank = j.at("mdr").get<double>();
  rep.mean_rank = j.at("mnr").get<double>();
  rep.ranks = j.at("ranks").get<std::vector<std::size_t>>();
  return rep;
}

}  // namespace muse
