// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "muse/config.hpp"
#include "muse/metrics.hpp"

namespace muse {

/// One row of an ablation grid: a label and the config it trains.
struct AblationSetting {
  std::string label;
  Config config;
};

struct AblationRow {
  std::string axis;
  std::string label;
  std::uint64_t seed = 0;
  RetrievalReport report;
  double first_loss = 0.0;
  double final_loss = 0.0;
  double seconds = 0.0;
};

/// block, scan, aggregation, scales, layers, residual.
const std::vector<std::string>& ablation_axes();

/// The settings for `axis`, each derived from `base`. Throws ConfigError for
/// an unknown axis.
std::vector<AblationSetting> ablation_grid(const std::string& axis, const Config& base);

/// Trains and evaluates every setting for each seed. The dataset is generated
/// per seed from the base config so all settings see the same data.
std::vector<AblationRow> run_ablation(const std::string& axis, const Config& base,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::function<void(const AblationRow&)>& on_row = {});

/// Header: axis,setting,seed,r1,r5,r10,mdr,mnr,first_loss,final_loss,seconds
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace muse
