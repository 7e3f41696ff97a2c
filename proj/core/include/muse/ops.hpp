// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "muse/autograd.hpp"

/// Differentiable kernels recorded on a Graph.
///
/// Binary elementwise ops broadcast their second operand when it is a
/// scalar or matches the trailing dimensions of the first. Every kernel
/// reports its multiply-add count to the active instrument counters.
namespace muse::ops {

Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

Var silu(Var a);
Var softplus(Var a);
Var exp(Var a);
/// Throws DomainError on non-positive input.
Var log(Var a);
/// Throws DomainError on zero input.
Var reciprocal(Var a);

enum class Elementwise { Add, Mul, Silu, Softplus, Exp, Log };
Var elementwise(Elementwise op, Var a, std::optional<Var> b = std::nullopt);

Var sum(Var a);
/// (R x C) -> (C)
Var mean_rows(Var a);

/// Normalizes over the last axis. `eps` must be non-negative; rows whose
/// variance plus eps is exactly zero normalize to zero.
Var layer_norm(Var x, Var gamma, Var beta, double eps);

/// Per-frame cross-correlation: x (T,H,W,Cin), w (k,k,Cin,Cout).
Var conv2d(Var x, Var w, std::size_t stride, std::size_t pad);

enum class PoolKind { Max, Mean };
/// Adaptive pooling of (T,H,W,C) to (T,h,w,C); window i covers
/// [floor(i*H/h), ceil((i+1)*H/h)). Max ties resolve to the first element
/// in row-major order.
Var pool2d(Var x, PoolKind kind, std::size_t out_h, std::size_t out_w);
/// Nearest-neighbour resize of (T,H,W,C) to (T,h,w,C).
Var upsample_nearest(Var x, std::size_t out_h, std::size_t out_w);

Var reshape(Var a, Shape shape);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var a, std::vector<std::size_t> rows);
Var reverse_rows(Var a);
Var slice_cols(Var a, std::size_t begin, std::size_t end);

/// Depthwise causal convolution along rows: x (L,E), w (k,E), b (E).
/// y[t,e] = b[e] + sum_j w[j,e] * x[t-k+1+j, e], out-of-range rows read as 0.
Var causal_conv1d(Var x, Var w, Var b);

/// Diagonal selective state-space recurrence, per channel e:
///   h_t = exp(delta[t,e] * A[e,:]) * h_{t-1} + delta[t,e] * B[t,:] * u[t,e]
///   y[t,e] = <C[t,:], h_t>,  h_{-1} = 0.
/// u, delta: (L,E); A: (E,N); B, C: (L,N). Throws DomainError unless delta > 0.
Var selective_scan(Var u, Var delta, Var A, Var B, Var C);

Var softmax_rows(Var a);
/// Unit L2 norm along the last axis, dividing by sqrt(|row|^2 + eps^2).
/// With eps = 0 a zero row throws DomainError.
Var l2_normalize_rows(Var a, double eps = 0.0);
/// Mean over rows of logsumexp(row) - row[target].
Var cross_entropy_rows(Var logits, std::vector<std::size_t> targets);

}  // namespace muse::ops
