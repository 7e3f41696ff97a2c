// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "muse/error.hpp"
#include "muse/grad_check.hpp"
#include "muse/ops.hpp"
#include "muse/ssm.hpp"

namespace muse {
namespace {

struct ScanInputs {
  Tensor u, delta, A, B, C;
};

ScanInputs random_scan(std::size_t L, std::size_t E, std::size_t N, Rng& rng) {
  ScanInputs s{rng.normal_tensor({L, E}), Tensor(Shape{L, E}), Tensor(Shape{E, N}), rng.normal_tensor({L, N}),
               rng.normal_tensor({L, N})};
  for (double& d : s.delta.data()) d = rng.uniform(0.05, 1.5);
  for (double& a : s.A.data()) a = -rng.uniform(0.1, 2.0);
  return s;
}

// Materializes y = M u per channel with M[t][s] = sum_n C[t,n] prod_{r=s+1..t} exp(d[r]A[n]) d[s] B[s,n].
Tensor dense_unrolled(const ScanInputs& in) {
  const std::size_t L = in.u.dim(0), E = in.u.dim(1), N = in.A.dim(1);
  Tensor y(Shape{L, E}, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t t = 0; t < L; ++t) {
      double acc = 0.0;
      for (std::size_t s = 0; s <= t; ++s) {
        double m = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          double decay_sum = 0.0;
          for (std::size_t r = s + 1; r <= t; ++r) decay_sum += in.delta[r * E + e];
          m += in.C[t * N + n] * std::exp(decay_sum * in.A[e * N + n]) * in.delta[s * E + e] * in.B[s * N + n];
        }
        acc += m * in.u[s * E + e];
      }
      y[t * E + e] = acc;
    }
  }
  return y;
}

SsmConfig small_config(BlockKind kind, ScanVariant variant, std::size_t layers = 1) {
  SsmConfig c;
  c.channels = 4;
  c.expand = 2;
  c.d_state = 3;
  c.conv_kernel = 3;
  c.layers = layers;
  c.kind = kind;
  c.variant = variant;
  return c;
}

void randomize_gate(ParamStore& store, const SsmLayerParams& p, Rng& rng) {
  store.value(p.gate_w) = rng.normal_tensor(store.value(p.gate_w).shape(), 0.5);
  store.value(p.gate_b) = rng.normal_tensor(store.value(p.gate_b).shape(), 0.5);
}

Tensor run_layer(const Tensor& x, const ParamStore& store, const SsmLayerParams& p, const SsmConfig& c) {
  Graph g;
  return res_mamba_layer(g.constant(x), store, p, c).value();
}

Tensor run_block(const Tensor& x, const ParamStore& store, const SsmLayerParams& p, const SsmConfig& c) {
  Graph g;
  return mamba_block(g.constant(x), store, p, c).value();
}

Tensor reversed(const Tensor& x) {
  Graph g;
  return ops::reverse_rows(g.constant(x)).value();
}

// ---- selective_scan ----

TEST(SelectiveScan, ZeroInputMatrixGivesZeroOutput) {
  Rng rng(1);
  ScanInputs in = random_scan(6, 2, 3, rng);
  in.B = Tensor(Shape{6, 3}, 0.0);
  const Tensor y = selective_scan(in.u, in.delta, in.A, in.B, in.C);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(SelectiveScan, ScalarHandRecurrence) {
  const Tensor one(Shape{2, 1}, 1.0);
  const Tensor y = selective_scan(one, one, Tensor(Shape{1, 1}, -1.0), one, one);
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.3679, 5e-5);
  EXPECT_NEAR(y[1], 1.0 + std::exp(-1.0), 1e-12);
}

TEST(SelectiveScan, MatchesDenseUnrolledOperator) {
  Rng rng(2);
  const ScanInputs in = random_scan(16, 3, 4, rng);
  const Tensor y = selective_scan(in.u, in.delta, in.A, in.B, in.C);
  const Tensor oracle = dense_unrolled(in);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], oracle[i], 1e-10);
}

TEST(SelectiveScan, HomogeneousInC) {
  Rng rng(3);
  ScanInputs in = random_scan(10, 2, 3, rng);
  const Tensor y = selective_scan(in.u, in.delta, in.A, in.B, in.C);
  for (double& c : in.C.data()) c *= 2.0;  // power of two keeps the product exact
  const Tensor y2 = selective_scan(in.u, in.delta, in.A, in.B, in.C);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y2[i], 2.0 * y[i]);
}

TEST(SelectiveScan, IsCausal) {
  Rng rng(4);
  ScanInputs in = random_scan(12, 2, 3, rng);
  const Tensor y = selective_scan(in.u, in.delta, in.A, in.B, in.C);
  in.u.at({7, 1}) += 3.0;
  in.B.at({9, 0}) -= 1.0;
  const Tensor y2 = selective_scan(in.u, in.delta, in.A, in.B, in.C);
  for (std::size_t i = 0; i < 7 * 2; ++i) EXPECT_EQ(y2[i], y[i]);
  EXPECT_NE(y2.at({7, 1}), y.at({7, 1}));
}

TEST(SelectiveScan, StateDecaysOnceInputStops) {
  // With C = one-hot(n), y tracks the n-th state coordinate of each channel.
  Rng rng(5);
  ScanInputs in = random_scan(20, 2, 3, rng);
  for (std::size_t t = 8; t < 20; ++t) {
    for (std::size_t e = 0; e < 2; ++e) in.u[t * 2 + e] = 0.0;
  }
  for (std::size_t n = 0; n < 3; ++n) {
    Tensor C(Shape{20, 3}, 0.0);
    for (std::size_t t = 0; t < 20; ++t) C[t * 3 + n] = 1.0;
    const Tensor y = selective_scan(in.u, in.delta, in.A, in.B, C);
    for (std::size_t t = 8; t + 1 < 20; ++t) {
      for (std::size_t e = 0; e < 2; ++e) EXPECT_LE(std::abs(y[(t + 1) * 2 + e]), std::abs(y[t * 2 + e]));
    }
  }
}

// ---- blocks ----

TEST(Block, ParseAndValidate) {
  EXPECT_EQ(parse_block("mambaout"), BlockKind::MambaOut);
  EXPECT_EQ(parse_variant("v1"), ScanVariant::V1);
  EXPECT_THROW(parse_block("rnn"), ConfigError);
  EXPECT_THROW(small_config(BlockKind::Attention, ScanVariant::V1).validate(), ContractError);
  SsmConfig zero = small_config(BlockKind::Mamba, ScanVariant::None);
  zero.d_state = 0;
  EXPECT_THROW(zero.validate(), ConfigError);
}

TEST(Block, AttentionWithBidirectionalVariantIsContractError) {
  Rng rng(6);
  ParamStore store;
  const SsmConfig attn = small_config(BlockKind::Attention, ScanVariant::None);
  const SsmLayerParams p = init_ssm_layer(store, attn, rng, "a.");
  SsmConfig bad = attn;
  bad.variant = ScanVariant::V2;
  Graph g;
  EXPECT_THROW(mamba_block(g.constant(rng.normal_tensor({5, 4})), store, p, bad), std::logic_error);
}

TEST(Block, TiedV2EqualsV1) {
  Rng rng(7);
  ParamStore store;
  const SsmConfig v2 = small_config(BlockKind::Mamba, ScanVariant::V2);
  const SsmLayerParams p = init_ssm_layer(store, v2, rng, "l.");
  tie_directions(store, p);
  SsmConfig v1 = v2;
  v1.variant = ScanVariant::V1;
  const Tensor x = rng.normal_tensor({9, 4});
  EXPECT_EQ(run_block(x, store, p, v2), run_block(x, store, p, v1));
}

TEST(Block, VariantNoneIsCausal) {
  Rng rng(8);
  for (BlockKind kind : {BlockKind::Mamba, BlockKind::MambaOut}) {
    ParamStore store;
    const SsmConfig c = small_config(kind, ScanVariant::None);
    const SsmLayerParams p = init_ssm_layer(store, c, rng, "l.");
    Tensor x = rng.normal_tensor({10, 4});
    const Tensor y = run_block(x, store, p, c);
    x.at({6, 2}) += 1.0;
    const Tensor y2 = run_block(x, store, p, c);
    for (std::size_t i = 0; i < 6 * 4; ++i) EXPECT_EQ(y2[i], y[i]);
  }
}

TEST(Block, ScanContributesBeyondMambaOut) {
  Rng rng(9);
  ParamStore store;
  const SsmConfig mamba = small_config(BlockKind::Mamba, ScanVariant::V2);
  const SsmLayerParams p = init_ssm_layer(store, mamba, rng, "l.");
  SsmConfig out = mamba;
  out.kind = BlockKind::MambaOut;
  const Tensor x = rng.normal_tensor({8, 4});
  const Tensor a = run_block(x, store, p, mamba);
  const Tensor b = run_block(x, store, p, out);
  double dist = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) dist += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_GT(std::sqrt(dist), 1e-3);
}

TEST(Block, V1IsReversalEquivariant) {
  Rng rng(10);
  ParamStore store;
  const SsmConfig c = small_config(BlockKind::Mamba, ScanVariant::V1);
  const SsmLayerParams p = init_ssm_layer(store, c, rng, "l.");
  const Tensor x = rng.normal_tensor({11, 4});
  const Tensor a = reversed(run_block(x, store, p, c));
  const Tensor b = run_block(reversed(x), store, p, c);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

// ---- residual layers ----

TEST(ResMamba, IdentityAtInitialization) {
  Rng rng(11);
  for (BlockKind kind : {BlockKind::Mamba, BlockKind::MambaOut, BlockKind::Attention}) {
    for (ScanVariant v : {ScanVariant::None, ScanVariant::V1, ScanVariant::V2}) {
      if (kind == BlockKind::Attention && v != ScanVariant::None) continue;
      for (std::size_t layers : {1u, 4u}) {
        ParamStore store;
        const ResMambaStack stack = init_res_mamba(store, small_config(kind, v, layers), rng);
        const Tensor x = rng.normal_tensor({7, 4});
        Graph g;
        EXPECT_EQ(res_mamba(g.constant(x), store, stack).value(), x)
            << to_string(kind) << " " << to_string(v) << " L=" << layers;
      }
    }
  }
}

TEST(ResMamba, ZeroLayersIsPassThrough) {
  Rng rng(12);
  ParamStore store;
  const ResMambaStack stack = init_res_mamba(store, small_config(BlockKind::Mamba, ScanVariant::V2, 0), rng);
  EXPECT_TRUE(stack.layers.empty());
  const Tensor x = rng.normal_tensor({5, 4});
  Graph g;
  EXPECT_EQ(res_mamba(g.constant(x), store, stack).value(), x);
}

TEST(ResMamba, WithoutResidualStartsAtZero) {
  Rng rng(13);
  ParamStore store;
  SsmConfig c = small_config(BlockKind::Mamba, ScanVariant::V2);
  c.residual = false;
  const SsmLayerParams p = init_ssm_layer(store, c, rng, "l.");
  const Tensor y = run_layer(rng.normal_tensor({6, 4}), store, p, c);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(ResMamba, OneSgdStepMovesTheGateOffIdentity) {
  Rng rng(14);
  ParamStore store;
  const SsmConfig c = small_config(BlockKind::Mamba, ScanVariant::V2);
  const SsmLayerParams p = init_ssm_layer(store, c, rng, "l.");
  const Tensor x = rng.normal_tensor({6, 4});
  const Tensor target = rng.normal_tensor({6, 4});
  Gradients grads;
  {
    Graph g(Graph::Mode::Training);
    Var y = res_mamba_layer(g.constant(x), store, p, c);
    Var diff = ops::sub(y, g.constant(target));
    grads = g.backward(ops::sum(ops::mul(diff, diff)));
  }
  for (const auto& [id, grad] : grads) {
    Tensor& w = store.value(id);
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] -= 0.1 * grad[i];
  }
  const Tensor y = run_layer(x, store, p, c);
  EXPECT_NE(y, x);
}

TEST(ResMamba, ShapeIsPreservedOnLongSequences) {
  Rng rng(15);
  ParamStore store;
  SsmConfig c;
  c.channels = 64;
  c.layers = 1;
  const ResMambaStack stack = init_res_mamba(store, c, rng);
  Graph g;
  EXPECT_EQ(res_mamba(g.constant(rng.normal_tensor({3060, 64})), store, stack).shape(), (Shape{3060, 64}));
}

TEST(ResMamba, FullLayerGradientCheck) {
  Rng rng(16);
  for (BlockKind kind : {BlockKind::Mamba, BlockKind::MambaOut, BlockKind::Attention}) {
    ParamStore store;
    const SsmConfig c = small_config(kind, kind == BlockKind::Attention ? ScanVariant::None : ScanVariant::V2);
    const SsmLayerParams p = init_ssm_layer(store, c, rng, "l.");
    randomize_gate(store, p, rng);
    const Tensor w = rng.normal_tensor({6, 4});
    const GradCheckReport r = grad_check(
        [&](Graph& g, std::span<const Var> in) {
          return ops::sum(ops::mul(res_mamba_layer(in[0], store, p, c), g.constant(w)));
        },
        {rng.normal_tensor({6, 4})}, 1e-5, 1e-4);
    EXPECT_TRUE(r.passed) << to_string(kind) << " rel err " << r.max_rel_error;
  }
}

}  // namespace
}  // namespace muse
