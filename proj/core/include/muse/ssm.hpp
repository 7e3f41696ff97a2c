// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "muse/autograd.hpp"
#include "muse/rng.hpp"

namespace muse {

/// Scan direction handling: forward only, bidirectional with one shared
/// parameter set, or bidirectional with a second set for the reverse pass.
enum class ScanVariant { None, V1, V2 };

/// Sequence mixer inside the block. MambaOut keeps the convolved stream and
/// drops the state-space scan; Attention swaps conv+scan for single-head
/// softmax attention.
enum class BlockKind { Mamba, MambaOut, Attention };

std::string to_string(ScanVariant v);
std::string to_string(BlockKind k);
ScanVariant parse_variant(const std::string& text);
BlockKind parse_block(const std::string& text);

struct SsmConfig {
  std::size_t channels = 64;
  std::size_t expand = 2;
  std::size_t d_state = 16;
  std::size_t conv_kernel = 4;
  std::size_t layers = 4;
  ScanVariant variant = ScanVariant::V2;
  BlockKind kind = BlockKind::Mamba;
  bool residual = true;

  std::size_t inner() const { return expand * channels; }
  /// Throws ConfigError on zero sizes or attention combined with a bidirectional variant.
  void validate() const;
};

/// Per-direction parameters. Scan projections are absent for MambaOut.
struct DirectionParams {
  ParamId conv_w = 0;  // (k, E)
  ParamId conv_b = 0;  // (E)
  struct Scan {
    ParamId dt_w;   // (E, E)
    ParamId dt_b;   // (E)
    ParamId b_w;    // (E, N)
    ParamId c_w;    // (E, N)
    ParamId a_log;  // (E, N); A = -exp(a_log)
  };
  std::optional<Scan> scan;
};

struct AttentionParams {
  ParamId q = 0, k = 0, v = 0;  // (E, E) each
};

struct SsmLayerParams {
  ParamId in_proj = 0;   // (C, 2E): stream | gate
  ParamId out_proj = 0;  // (E, C)
  std::vector<DirectionParams> directions;  // 1 for None/V1, 2 for V2, empty for Attention
  std::optional<AttentionParams> attention;
  // Residual gate: layer norm followed by a zero-initialized linear map.
  ParamId gate_gamma = 0, gate_beta = 0;
  ParamId gate_w = 0, gate_b = 0;  // (C, C), (C)
};

struct ResMambaStack {
  SsmConfig config;
  std::vector<SsmLayerParams> layers;
};

SsmLayerParams init_ssm_layer(ParamStore& store, const SsmConfig& config, Rng& rng, const std::string& prefix);
ResMambaStack init_res_mamba(ParamStore& store, const SsmConfig& config, Rng& rng,
                             const std::string& prefix = "learner");

/// Overwrites the reverse-direction parameters of a V2 layer with copies of
/// the forward ones.
void tie_directions(ParamStore& store, const SsmLayerParams& layer);

/// x (L, C) -> (L, C). Throws ContractError for Attention with V1/V2.
Var mamba_block(Var x, const ParamStore& store, const SsmLayerParams& params, const SsmConfig& config);

/// x + G(LN(block(x))), or G(LN(block(x))) when residual is off.
Var res_mamba_layer(Var x, const ParamStore& store, const SsmLayerParams& params, const SsmConfig& config);

/// Applies every layer of the stack in order; zero layers is the identity.
Var res_mamba(Var x, const ParamStore& store, const ResMambaStack& stack);

/// Inference-only scan on plain tensors.
Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C);

}  // namespace muse
