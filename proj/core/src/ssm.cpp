// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/ssm.hpp"

#include <cmath>

#include "muse/error.hpp"
#include "muse/ops.hpp"
#include "muse/pyramid.hpp"

namespace muse {

std::string to_string(ScanVariant v) {
  switch (v) {
    case ScanVariant::None: return "none";
    case ScanVariant::V1: return "v1";
    case ScanVariant::V2: return "v2";
  }
  return "?";
}

std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::Mamba: return "mamba";
    case BlockKind::MambaOut: return "mambaout";
    case BlockKind::Attention: return "attention";
  }
  return "?";
}

ScanVariant parse_variant(const std::string& text) {
  if (text == "none") return ScanVariant::None;
  if (text == "v1") return ScanVariant::V1;
  if (text == "v2") return ScanVariant::V2;
  throw ConfigError("unknown scan variant '" + text + "' (expected none|v1|v2)");
}

BlockKind parse_block(const std::string& text) {
  if (text == "mamba") return BlockKind::Mamba;
  if (text == "mambaout") return BlockKind::MambaOut;
  if (text == "attention") return BlockKind::Attention;
  throw ConfigError("unknown block kind '" + text + "' (expected mamba|mambaout|attention)");
}

void SsmConfig::validate() const {
  if (channels == 0 || expand == 0 || d_state == 0 || conv_kernel == 0) {
    throw ConfigError("ssm sizes (channels, expand, d_state, conv_kernel) must be positive");
  }
  if (kind == BlockKind::Attention && variant != ScanVariant::None) {
    throw ContractError("attention block has no scan direction; use variant none");
  }
}

namespace {

// Step sizes are drawn log-uniformly in [1e-3, 1e-1] and stored through the
// inverse softplus so that softplus(dt_b) reproduces them.
Tensor init_dt_bias(std::size_t E, Rng& rng) {
  Tensor b(Shape{E});
  for (std::size_t e = 0; e < E; ++e) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    b[e] = dt + std::log(-std::expm1(-dt));
  }
  return b;
}

DirectionParams init_direction(ParamStore& store, const SsmConfig& cfg, Rng& rng, const std::string& prefix) {
  const std::size_t E = cfg.inner(), N = cfg.d_state, k = cfg.conv_kernel;
  DirectionParams d;
  d.conv_w = store.add(prefix + "conv_w", rng.normal_tensor(Shape{k, E}, 1.0 / std::sqrt(static_cast<double>(k))));
  d.conv_b = store.add(prefix + "conv_b", Tensor(Shape{E}, 0.0));
  if (cfg.kind == BlockKind::Mamba) {
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(E));
    DirectionParams::Scan s{};
    s.dt_w = store.add(prefix + "dt_w", rng.normal_tensor(Shape{E, E}, proj_std));
    s.dt_b = store.add(prefix + "dt_b", init_dt_bias(E, rng));
    s.b_w = store.add(prefix + "b_w", rng.normal_tensor(Shape{E, N}, proj_std));
    s.c_w = store.add(prefix + "c_w", rng.normal_tensor(Shape{E, N}, proj_std));
    Tensor a_log(Shape{E, N});
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t n = 0; n < N; ++n) a_log[e * N + n] = std::log(static_cast<double>(n + 1));
    }
    s.a_log = store.add(prefix + "a_log", std::move(a_log));
    d.scan = s;
  }
  return d;
}

Var direction_path(Var stream, const ParamStore& store, const DirectionParams& d, BlockKind kind) {
  Graph& g = *stream.graph;
  Var conv = ops::silu(ops::causal_conv1d(stream, g.param(store, d.conv_w), g.param(store, d.conv_b)));
  if (kind == BlockKind::MambaOut) return conv;
  if (!d.scan) throw ContractError("mamba_block: layer has no scan parameters for a mamba block");
  const auto& s = *d.scan;
  Var delta = ops::softplus(ops::add(ops::matmul(conv, g.param(store, s.dt_w)), g.param(store, s.dt_b)));
  Var B = ops::matmul(conv, g.param(store, s.b_w));
  Var C = ops::matmul(conv, g.param(store, s.c_w));
  Var A = ops::scale(ops::exp(g.param(store, s.a_log)), -1.0);
  return ops::selective_scan(conv, delta, A, B, C);
}

Var attention_path(Var stream, const ParamStore& store, const AttentionParams& a) {
  Graph& g = *stream.graph;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(stream.value().dim(1)));
  Var q = ops::matmul(stream, g.param(store, a.q));
  Var k = ops::matmul(stream, g.param(store, a.k));
  Var v = ops::matmul(stream, g.param(store, a.v));
  Var probs = ops::softmax_rows(ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt));
  return ops::matmul(probs, v);
}

}  // namespace

SsmLayerParams init_ssm_layer(ParamStore& store, const SsmConfig& cfg, Rng& rng, const std::string& prefix) {
  cfg.validate();
  const std::size_t C = cfg.channels, E = cfg.inner();
  SsmLayerParams p;
  p.in_proj = store.add(prefix + "in_proj", rng.normal_tensor(Shape{C, 2 * E}, 1.0 / std::sqrt(static_cast<double>(C))));
  if (cfg.kind == BlockKind::Attention) {
    const double std_e = 1.0 / std::sqrt(static_cast<double>(E));
    AttentionParams a;
    a.q = store.add(prefix + "attn_q", rng.normal_tensor(Shape{E, E}, std_e));
    a.k = store.add(prefix + "attn_k", rng.normal_tensor(Shape{E, E}, std_e));
    a.v = store.add(prefix + "attn_v", rng.normal_tensor(Shape{E, E}, std_e));
    p.attention = a;
  } else {
    p.directions.push_back(init_direction(store, cfg, rng, prefix + "fwd."));
    if (cfg.variant == ScanVariant::V2) p.directions.push_back(init_direction(store, cfg, rng, prefix + "bwd."));
  }
  p.out_proj = store.add(prefix + "out_proj", rng.normal_tensor(Shape{E, C}, 1.0 / std::sqrt(static_cast<double>(E))));
  p.gate_gamma = store.add(prefix + "gate.gamma", Tensor(Shape{C}, 1.0));
  p.gate_beta = store.add(prefix + "gate.beta", Tensor(Shape{C}, 0.0));
  p.gate_w = store.add(prefix + "gate.w", Tensor(Shape{C, C}, 0.0));
  p.gate_b = store.add(prefix + "gate.b", Tensor(Shape{C}, 0.0));
  return p;
}

ResMambaStack init_res_mamba(ParamStore& store, const SsmConfig& config, Rng& rng, const std::string& prefix) {
  config.validate();
  ResMambaStack stack;
  stack.config = config;
  for (std::size_t l = 0; l < config.layers; ++l) {
    stack.layers.push_back(init_ssm_layer(store, config, rng, prefix + ".l" + std::to_string(l) + "."));
  }
  return stack;
}

void tie_directions(ParamStore& store, const SsmLayerParams& layer) {
  if (layer.directions.size() != 2) throw ContractError("tie_directions: layer has no reverse parameter set");
  const auto& f = layer.directions[0];
  const auto& b = layer.directions[1];
  store.value(b.conv_w) = store.value(f.conv_w);
  store.value(b.conv_b) = store.value(f.conv_b);
  if (f.scan && b.scan) {
    store.value(b.scan->dt_w) = store.value(f.scan->dt_w);
    store.value(b.scan->dt_b) = store.value(f.scan->dt_b);
    store.value(b.scan->b_w) = store.value(f.scan->b_w);
    store.value(b.scan->c_w) = store.value(f.scan->c_w);
    store.value(b.scan->a_log) = store.value(f.scan->a_log);
  }
}

Var mamba_block(Var x, const ParamStore& store, const SsmLayerParams& params, const SsmConfig& config) {
  config.validate();
  const Tensor& X = x.value();
  if (X.rank() != 2 || X.dim(0) == 0 || X.dim(1) != config.channels) {
    throw DimensionError("mamba_block: input " + shape_str(X.shape()) + " vs channels " +
                         std::to_string(config.channels));
  }
  Graph& g = *x.graph;
  const std::size_t E = config.inner();
  Var xz = ops::matmul(x, g.param(store, params.in_proj));
  Var stream = ops::slice_cols(xz, 0, E);
  Var gate = ops::slice_cols(xz, E, 2 * E);

  Var mixed;
  if (config.kind == BlockKind::Attention) {
    if (!params.attention) throw ContractError("mamba_block: layer has no attention parameters");
    mixed = attention_path(stream, store, *params.attention);
  } else {
    if (params.directions.empty()) throw ContractError("mamba_block: layer has no scan parameters");
    Var forward = direction_path(stream, store, params.directions[0], config.kind);
    if (config.variant == ScanVariant::None) {
      mixed = forward;
    } else {
      if (config.variant == ScanVariant::V2 && params.directions.size() < 2) {
        throw ContractError("mamba_block: v2 needs a reverse parameter set");
      }
      const DirectionParams& rev = config.variant == ScanVariant::V1 ? params.directions[0] : params.directions[1];
      Var backward = ops::reverse_rows(direction_path(ops::reverse_rows(stream), store, rev, config.kind));
      mixed = ops::scale(ops::add(forward, backward), 0.5);
    }
  }
  Var gated = ops::mul(mixed, ops::silu(gate));
  return ops::matmul(gated, g.param(store, params.out_proj));
}

Var res_mamba_layer(Var x, const ParamStore& store, const SsmLayerParams& params, const SsmConfig& config) {
  Graph& g = *x.graph;
  Var y = mamba_block(x, store, params, config);
  Var normed = ops::layer_norm(y, g.param(store, params.gate_gamma), g.param(store, params.gate_beta), kLayerNormEps);
  Var update = ops::add(ops::matmul(normed, g.param(store, params.gate_w)), g.param(store, params.gate_b));
  return config.residual ? ops::add(x, update) : update;
}

Var res_mamba(Var x, const ParamStore& store, const ResMambaStack& stack) {
  for (const auto& layer : stack.layers) x = res_mamba_layer(x, store, layer, stack.config);
  return x;
}

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C) {
  Graph g(Graph::Mode::Inference);
  return ops::selective_scan(g.constant(u), g.constant(delta), g.constant(A), g.constant(B), g.constant(C)).value();
}

}  // namespace muse
