// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/bench.hpp"

#include <chrono>
#include <ostream>

#include "muse/error.hpp"
#include "muse/instrument.hpp"

namespace muse::bench {

std::uint64_t quadratic_madds(BlockKind kind, std::size_t L, std::size_t E) {
  return kind == BlockKind::Attention ? 2ULL * L * L * E : 0ULL;
}

CostModel predict_cost(BlockKind kind, std::size_t L, std::size_t C, std::size_t E, std::size_t N,
                       std::size_t conv_kernel) {
  if (L == 0 || C == 0 || E == 0 || N == 0 || conv_kernel == 0) throw ConfigError("predict_cost: dimensions must be positive");
  CostModel m{kind, L, C, E, N, conv_kernel};
  std::uint64_t madds = 2ULL * L * C * E + 1ULL * L * E * C + 1ULL * L * C * C;
  switch (kind) {
    case BlockKind::Mamba:
      madds += 1ULL * L * E * conv_kernel + 1ULL * L * E * E + 2ULL * L * E * N + 4ULL * L * E * N + 1ULL * L * E;
      break;
    case BlockKind::MambaOut:
      madds += 1ULL * L * E * conv_kernel;
      break;
    case BlockKind::Attention:
      madds += 3ULL * L * E * E + quadratic_madds(kind, L, E);
      break;
  }
  m.predicted_madds = madds;
  return m;
}

std::uint64_t estimate_peak_scalars(BlockKind kind, std::size_t L, std::size_t C, std::size_t E, std::size_t N) {
  std::uint64_t linear = 16ULL * L * E + 4ULL * L * C;
  if (kind == BlockKind::Mamba) linear += 1ULL * L * E * N;
  if (kind == BlockKind::Attention) return linear + 4ULL * L * L;
  return linear;
}

CostModel measure_cost(BlockKind kind, std::size_t L, std::size_t C, std::size_t E, std::size_t N,
                       std::size_t conv_kernel, std::uint64_t seed) {
  if (E % C != 0) throw ConfigError("measure_cost: inner width must be a multiple of channels");
  CostModel m = predict_cost(kind, L, C, E, N, conv_kernel);
  SsmConfig cfg;
  cfg.channels = C;
  cfg.expand = E / C;
  cfg.d_state = N;
  cfg.conv_kernel = conv_kernel;
  cfg.layers = 1;
  cfg.variant = ScanVariant::None;
  cfg.kind = kind;

  Rng rng(seed);
  ParamStore store;
  const ResMambaStack stack = init_res_mamba(store, cfg, rng);
  const Tensor input = rng.normal_tensor(Shape{L, C});

  instrument::Counters counters;
  const auto start = std::chrono::steady_clock::now();
  {
    instrument::CountingScope scope(counters);
    Graph g;
    Var x = g.constant(input);
    Var y = res_mamba_layer(x, store, stack.layers[0], cfg);
    (void)y;
  }
  const auto stop = std::chrono::steady_clock::now();
  m.measured_madds = counters.madds;
  m.peak_scalars = counters.peak_scalars;
  m.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  return m;
}

SweepResult sweep(const SweepOptions& options) {
  for (std::size_t i = 1; i < options.frames.size(); ++i) {
    if (options.frames[i] <= options.frames[i - 1]) throw ConfigError("sweep: frame counts must be strictly ascending");
  }
  SweepResult result;
  result.options = options;
  const std::size_t E = options.expand * options.channels;
  for (BlockKind kind : options.kinds) {
    for (std::size_t frames : options.frames) {
      const std::size_t L = frames * options.tokens_per_frame;
      SweepRow row;
      row.frames = frames;
      if (estimate_peak_scalars(kind, L, options.channels, E, options.d_state) > options.scalar_budget) {
        row.skipped = true;
        row.cost = predict_cost(kind, L, options.channels, E, options.d_state, options.conv_kernel);
        result.notices.push_back("skipped " + to_string(kind) + " at " + std::to_string(frames) +
                                 " frames: estimated peak exceeds scalar budget");
      } else {
        row.cost = measure_cost(kind, L, options.channels, E, options.d_state, options.conv_kernel, options.seed);
      }
      result.rows.push_back(row);
    }
  }
  return result;
}

void write_csv(std::ostream& out, const SweepResult& result) {
  out << "kind,frames,tokens,predicted_madds,measured_madds,peak_scalars,wall_ms\n";
  for (const SweepRow& r : result.rows) {
    out << to_string(r.cost.kind) << ',' << r.frames << ',' << r.cost.length << ',' << r.cost.predicted_madds << ',';
    if (r.skipped) {
      out << ",,\n";
    } else {
      out << r.cost.measured_madds << ',' << r.cost.peak_scalars << ',' << r.cost.wall_ms << '\n';
    }
  }
}

nlohmann::json summary_json(const SweepResult& result) {
  const auto& o = result.options;
  nlohmann::json j;
  j["cost_model"] = {
      {"shared", "in_proj L*C*2E + out_proj L*E*C + gate L*C*C"},
      {"mamba", "conv L*E*k + step_proj L*E*E + bc_proj 2*L*E*N + scan 4*L*E*N + L*E"},
      {"mambaout", "conv L*E*k"},
      {"attention", "qkv 3*L*E*E + scores L*L*E + mixing L*L*E"},
  };
  j["channels"] = o.channels;
  j["inner"] = o.expand * o.channels;
  j["d_state"] = o.d_state;
  j["conv_kernel"] = o.conv_kernel;
  j["tokens_per_frame"] = o.tokens_per_frame;
  j["notices"] = result.notices;

  nlohmann::json rows = nlohmann::json::array();
  for (const SweepRow& r : result.rows) {
    nlohmann::json row{{"kind", to_string(r.cost.kind)},
                       {"frames", r.frames},
                       {"tokens", r.cost.length},
                       {"predicted_madds", r.cost.predicted_madds},
                       {"skipped", r.skipped}};
    if (!r.skipped) {
      row["measured_madds"] = r.cost.measured_madds;
      row["peak_scalars"] = r.cost.peak_scalars;
    }
    rows.push_back(row);
  }
  j["rows"] = rows;

  nlohmann::json growth = nlohmann::json::array();
  bool all_ok = true;
  for (const SweepRow& a : result.rows) {
    for (const SweepRow& b : result.rows) {
      if (a.skipped || b.skipped || a.cost.kind != b.cost.kind || b.cost.length != 2 * a.cost.length) continue;
      const double madd_ratio = static_cast<double>(b.cost.measured_madds) / static_cast<double>(a.cost.measured_madds);
      const double peak_ratio = static_cast<double>(b.cost.peak_scalars) / static_cast<double>(a.cost.peak_scalars);
      nlohmann::json g{{"kind", to_string(a.cost.kind)},
                       {"tokens", a.cost.length},
                       {"doubled_tokens", b.cost.length},
                       {"madd_ratio", madd_ratio},
                       {"peak_ratio", peak_ratio}};
      if (a.cost.length >= 2048) {
        const bool ok = a.cost.kind == BlockKind::Attention ? madd_ratio > 3.2 : madd_ratio < 2.3;
        g["assertion"] = a.cost.kind == BlockKind::Attention ? "madd_ratio > 3.2" : "madd_ratio < 2.3";
        g["passed"] = ok;
        all_ok = all_ok && ok;
      }
      growth.push_back(g);
    }
  }
  j["growth"] = growth;
  j["assertions_passed"] = all_ok;
  return j;
}

}  // namespace muse::bench
