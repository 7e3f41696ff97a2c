// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/reproduce.hpp"

#include <chrono>
#include <iomanip>

#include "muse/error.hpp"
#include "muse/trainer.hpp"

namespace muse {

namespace {

AblationSetting with(const Config& base, std::string label, const std::string& key, const std::string& value) {
  Config c = base;
  c.set(key, value);
  return {std::move(label), std::move(c)};
}

}  // namespace

const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> axes = {"block", "scan", "aggregation", "scales", "layers", "residual"};
  return axes;
}

std::vector<AblationSetting> ablation_grid(const std::string& axis, const Config& base) {
  std::vector<AblationSetting> grid;
  if (axis == "block") {
    grid.push_back(with(base, "mamba", "block", "mamba"));
    grid.push_back(with(base, "mambaout", "block", "mambaout"));
    AblationSetting attn = with(base, "attention", "block", "attention");
    attn.config.variant = ScanVariant::None;
    grid.push_back(std::move(attn));
  } else if (axis == "scan") {
    for (const char* v : {"none", "v1", "v2"}) grid.push_back(with(base, v, "variant", v));
  } else if (axis == "aggregation") {
    for (const char* a : {"scale", "frame", "spatial"}) grid.push_back(with(base, a, "aggregation", a));
  } else if (axis == "scales") {
    for (const char* s : {"1", "1,3", "1,3,7", "1,3,7,14", "1,3,7,14,28"}) {
      grid.push_back(with(base, "{" + std::string(s) + "}", "scales", s));
    }
  } else if (axis == "layers") {
    for (const char* l : {"0", "2", "4", "8", "16"}) grid.push_back(with(base, l, "layers", l));
  } else if (axis == "residual") {
    grid.push_back(with(base, "with_residual", "residual", "true"));
    grid.push_back(with(base, "without_residual", "residual", "false"));
  } else {
    throw ConfigError("unknown ablation axis '" + axis + "' (block|scan|aggregation|scales|layers|residual)");
  }
  for (const auto& s : grid) s.config.validate();
  return grid;
}

std::vector<AblationRow> run_ablation(const std::string& axis, const Config& base,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::function<void(const AblationRow&)>& on_row) {
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : seeds) {
    Config seeded = base;
    seeded.seed = seed;
    const auto grid = ablation_grid(axis, seeded);
    const SyntheticPairSet data = gen_data(seeded);
    for (const auto& setting : grid) {
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult trained = train(setting.config, data);
      AblationRow row;
      row.axis = axis;
      row.label = setting.label;
      row.seed = seed;
      row.report = evaluate(trained.model, data);
      row.first_loss = trained.loss_curve.empty() ? 0.0 : trained.loss_curve.front();
      row.final_loss = trained.loss_curve.empty() ? 0.0 : trained.loss_curve.back();
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (on_row) on_row(row);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "axis,setting,seed,r1,r5,r10,mdr,mnr,first_loss,final_loss,seconds\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.axis << ",\"" << r.label << "\"," << r.seed << ',' << r.report.recall_at.at(1) << ','
        << r.report.recall_at.at(5) << ',' << r.report.recall_at.at(10) << ',' << r.report.median_rank << ','
        << r.report.mean_rank << ',' << r.first_loss << ',' << r.final_loss << ',' << r.seconds << '\n';
  }
}

}  // namespace muse
