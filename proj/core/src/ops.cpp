// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "muse/error.hpp"
#include "muse/instrument.hpp"

namespace muse::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Graph& graph_of(Var v) {
  if (v.graph == nullptr) throw ContractError("variable is not attached to a graph");
  return *v.graph;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

// Second operand broadcast: equal shape, scalar, or trailing-dim suffix.
void check_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape() || b.numel() == 1) return;
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) return;
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(sb) + " onto " + shape_str(sa));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = fwd(x[i]);
  instrument::add_madds(x.numel());
  return graph_of(a).record(std::move(y), {a}, [a, deriv](const Tensor& g, std::span<Tensor* const> gi) {
    const Tensor& x = a.value();
    Tensor& gx = *gi[0];
    for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g[i] * deriv(x[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank(A, 2, "matmul");
  require_rank(B, 2, "matmul");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  }
  Tensor Y(Shape{m, n});
  MutMap(Y.ptr(), m, n).noalias() = ConstMap(A.ptr(), m, k) * ConstMap(B.ptr(), k, n);
  instrument::add_madds(m * k * n);
  return graph_of(a).record(std::move(Y), {a, b}, [a, b, m, k, n](const Tensor& g, std::span<Tensor* const> gi) {
    ConstMap G(g.ptr(), m, n);
    if (gi[0]) {
      MutMap(gi[0]->ptr(), m, k).noalias() += G * ConstMap(b.value().ptr(), k, n).transpose();
      instrument::add_madds(m * k * n);
    }
    if (gi[1]) {
      MutMap(gi[1]->ptr(), k, n).noalias() += ConstMap(a.value().ptr(), m, k).transpose() * G;
      instrument::add_madds(m * k * n);
    }
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  require_rank(A, 2, "transpose");
  const std::size_t r = A.dim(0), c = A.dim(1);
  Tensor Y(Shape{c, r});
  MutMap(Y.ptr(), c, r) = ConstMap(A.ptr(), r, c).transpose();
  return graph_of(a).record(std::move(Y), {a}, [r, c](const Tensor& g, std::span<Tensor* const> gi) {
    MutMap(gi[0]->ptr(), r, c) += ConstMap(g.ptr(), c, r).transpose();
  });
}

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  check_broadcast(A, B, "add");
  const std::size_t nb = B.numel();
  Tensor Y(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) Y[i] = A[i] + B[i % nb];
  instrument::add_madds(A.numel());
  return graph_of(a).record(std::move(Y), {a, b}, [nb](const Tensor& g, std::span<Tensor* const> gi) {
    if (gi[0]) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i];
    }
    if (gi[1]) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gi[1])[i % nb] += g[i];
    }
  });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  check_broadcast(A, B, "mul");
  const std::size_t nb = B.numel();
  Tensor Y(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) Y[i] = A[i] * B[i % nb];
  instrument::add_madds(A.numel());
  return graph_of(a).record(std::move(Y), {a, b}, [a, b, nb](const Tensor& g, std::span<Tensor* const> gi) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (gi[0]) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i] * B[i % nb];
    }
    if (gi[1]) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gi[1])[i % nb] += g[i] * A[i];
    }
  });
}

Var scale(Var a, double factor) {
  const Tensor& A = a.value();
  Tensor Y(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) Y[i] = A[i] * factor;
  instrument::add_madds(A.numel());
  return graph_of(a).record(std::move(Y), {a}, [factor](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i] * factor;
  });
}

Var silu(Var a) {
  return unary(
      a, [](double x) { return x * sigmoid(x); },
      [](double x) {
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var softplus(Var a) { return unary(a, softplus_value, sigmoid); }

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(
      a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var reciprocal(Var a) {
  for (double v : a.value().data()) {
    if (v == 0.0) throw DomainError("reciprocal of zero");
  }
  return unary(
      a, [](double x) { return 1.0 / x; }, [](double x) { return -1.0 / (x * x); });
}

Var elementwise(Elementwise op, Var a, std::optional<Var> b) {
  const bool binary = op == Elementwise::Add || op == Elementwise::Mul;
  if (binary != b.has_value()) throw ContractError("elementwise: operand count does not match op arity");
  switch (op) {
    case Elementwise::Add: return add(a, *b);
    case Elementwise::Mul: return mul(a, *b);
    case Elementwise::Silu: return silu(a);
    case Elementwise::Softplus: return softplus(a);
    case Elementwise::Exp: return exp(a);
    case Elementwise::Log: return log(a);
  }
  throw ContractError("elementwise: unknown op");
}

Var sum(Var a) {
  const Tensor& A = a.value();
  double s = 0.0;
  for (double v : A.data()) s += v;
  instrument::add_madds(A.numel());
  return graph_of(a).record(Tensor::scalar(s), {a}, [](const Tensor& g, std::span<Tensor* const> gi) {
    const double gv = g[0];
    for (double& v : gi[0]->data()) v += gv;
  });
}

Var mean_rows(Var a) {
  const Tensor& A = a.value();
  require_rank(A, 2, "mean_rows");
  const std::size_t r = A.dim(0), c = A.dim(1);
  Tensor Y(Shape{c});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) Y[j] += A[i * c + j];
  }
  for (std::size_t j = 0; j < c; ++j) Y[j] /= static_cast<double>(r);
  instrument::add_madds(A.numel());
  return graph_of(a).record(std::move(Y), {a}, [r, c](const Tensor& g, std::span<Tensor* const> gi) {
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) (*gi[0])[i * c + j] += g[j] * inv;
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& X = x.value();
  if (X.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t c = X.shape().back();
  if (gamma.value().shape() != Shape{c} || beta.value().shape() != Shape{c}) {
    throw DimensionError("layer_norm: affine params " + shape_str(gamma.value().shape()) + "/" +
                         shape_str(beta.value().shape()) + " vs last dim of " + shape_str(X.shape()));
  }
  if (!(eps >= 0.0)) throw DomainError("layer_norm: eps must be non-negative");
  const std::size_t rows = X.numel() / c;
  Tensor xhat(X.shape());
  Tensor rstd(Shape{rows});
  Tensor Y(X.shape());
  const Tensor& G = gamma.value();
  const Tensor& Bt = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.ptr() + r * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(c);
    const double denom = var + eps;
    const double rs = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
    rstd[r] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xr[j] - mean) * rs;
      xhat[r * c + j] = h;
      Y[r * c + j] = h * G[j] + Bt[j];
    }
  }
  instrument::add_madds(5 * X.numel());
  return graph_of(x).record(
      std::move(Y), {x, gamma, beta},
      [gamma, xhat = std::move(xhat), rstd = std::move(rstd), rows, c](const Tensor& g,
                                                                        std::span<Tensor* const> gi) {
        const Tensor& G = gamma.value();
        if (gi[1]) {
          for (std::size_t i = 0; i < g.numel(); ++i) (*gi[1])[i % c] += g[i] * xhat[i];
        }
        if (gi[2]) {
          for (std::size_t i = 0; i < g.numel(); ++i) (*gi[2])[i % c] += g[i];
        }
        if (gi[0]) {
          for (std::size_t r = 0; r < rows; ++r) {
            double mg = 0.0, mgx = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double gh = g[r * c + j] * G[j];
              mg += gh;
              mgx += gh * xhat[r * c + j];
            }
            mg /= static_cast<double>(c);
            mgx /= static_cast<double>(c);
            for (std::size_t j = 0; j < c; ++j) {
              const double gh = g[r * c + j] * G[j];
              (*gi[0])[r * c + j] += rstd[r] * (gh - mg - xhat[r * c + j] * mgx);
            }
          }
        }
      });
}

Var conv2d(Var x, Var w, std::size_t stride, std::size_t pad) {
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  require_rank(X, 4, "conv2d");
  require_rank(W, 4, "conv2d");
  const std::size_t T = X.dim(0), H = X.dim(1), Wd = X.dim(2), ci = X.dim(3);
  const std::size_t k = W.dim(0), co = W.dim(3);
  if (W.dim(1) != k || W.dim(2) != ci) {
    throw DimensionError("conv2d: kernel " + shape_str(W.shape()) + " incompatible with input " + shape_str(X.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (k > H + 2 * pad || k > Wd + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_str(W.shape()) + " larger than padded input " + shape_str(X.shape()));
  }
  const std::size_t Ho = (H + 2 * pad - k) / stride + 1;
  const std::size_t Wo = (Wd + 2 * pad - k) / stride + 1;
  Tensor Y(Shape{T, Ho, Wo, co});
  std::uint64_t macs = 0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t oh = 0; oh < Ho; ++oh) {
      for (std::size_t ow = 0; ow < Wo; ++ow) {
        double* out = Y.ptr() + ((t * Ho + oh) * Wo + ow) * co;
        for (std::size_t kh = 0; kh < k; ++kh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) - static_cast<std::ptrdiff_t>(pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kw = 0; kw < k; ++kw) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kw) - static_cast<std::ptrdiff_t>(pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(Wd)) continue;
            const double* in = X.ptr() + ((t * H + ih) * Wd + iw) * ci;
            const double* wk = W.ptr() + (kh * k + kw) * ci * co;
            for (std::size_t c = 0; c < ci; ++c) {
              const double xv = in[c];
              const double* wr = wk + c * co;
              for (std::size_t o = 0; o < co; ++o) out[o] += xv * wr[o];
            }
            macs += ci * co;
          }
        }
      }
    }
  }
  instrument::add_madds(macs);
  return graph_of(x).record(
      std::move(Y), {x, w},
      [x, w, T, H, Wd, ci, k, co, Ho, Wo, stride, pad](const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& X = x.value();
        const Tensor& W = w.value();
        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t oh = 0; oh < Ho; ++oh) {
            for (std::size_t ow = 0; ow < Wo; ++ow) {
              const double* go = g.ptr() + ((t * Ho + oh) * Wo + ow) * co;
              for (std::size_t kh = 0; kh < k; ++kh) {
                const std::ptrdiff_t ih =
                    static_cast<std::ptrdiff_t>(oh * stride + kh) - static_cast<std::ptrdiff_t>(pad);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kw = 0; kw < k; ++kw) {
                  const std::ptrdiff_t iw =
                      static_cast<std::ptrdiff_t>(ow * stride + kw) - static_cast<std::ptrdiff_t>(pad);
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(Wd)) continue;
                  const std::size_t in_off = ((t * H + ih) * Wd + iw) * ci;
                  const std::size_t w_off = (kh * k + kw) * ci * co;
                  for (std::size_t c = 0; c < ci; ++c) {
                    const double* wr = W.ptr() + w_off + c * co;
                    if (gi[0]) {
                      double acc = 0.0;
                      for (std::size_t o = 0; o < co; ++o) acc += go[o] * wr[o];
                      (*gi[0])[in_off + c] += acc;
                    }
                    if (gi[1]) {
                      const double xv = X[in_off + c];
                      double* gw = gi[1]->ptr() + w_off + c * co;
                      for (std::size_t o = 0; o < co; ++o) gw[o] += xv * go[o];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

namespace {

std::size_t window_begin(std::size_t i, std::size_t in, std::size_t out) { return (i * in) / out; }
std::size_t window_end(std::size_t i, std::size_t in, std::size_t out) { return ((i + 1) * in + out - 1) / out; }

}  // namespace

Var pool2d(Var x, PoolKind kind, std::size_t out_h, std::size_t out_w) {
  const Tensor& X = x.value();
  require_rank(X, 4, "pool2d");
  const std::size_t T = X.dim(0), H = X.dim(1), W = X.dim(2), C = X.dim(3);
  if (out_h == 0 || out_w == 0) throw DimensionError("pool2d: output size must be positive");
  if (out_h > H || out_w > W) {
    throw DimensionError("pool2d: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                         " exceeds input " + shape_str(X.shape()));
  }
  Tensor Y(Shape{T, out_h, out_w, C});
  // For max pooling, the flat input index feeding each output element.
  std::vector<std::size_t> argmax(kind == PoolKind::Max ? Y.numel() : 0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < out_h; ++i) {
      const std::size_t r0 = window_begin(i, H, out_h), r1 = window_end(i, H, out_h);
      for (std::size_t j = 0; j < out_w; ++j) {
        const std::size_t c0 = window_begin(j, W, out_w), c1 = window_end(j, W, out_w);
        const std::size_t out_off = ((t * out_h + i) * out_w + j) * C;
        for (std::size_t c = 0; c < C; ++c) {
          if (kind == PoolKind::Max) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_idx = 0;
            for (std::size_t r = r0; r < r1; ++r) {
              for (std::size_t q = c0; q < c1; ++q) {
                const std::size_t idx = ((t * H + r) * W + q) * C + c;
                if (X[idx] > best) {
                  best = X[idx];
                  best_idx = idx;
                }
              }
            }
            Y[out_off + c] = best;
            argmax[out_off + c] = best_idx;
          } else {
            double s = 0.0;
            for (std::size_t r = r0; r < r1; ++r) {
              for (std::size_t q = c0; q < c1; ++q) s += X[((t * H + r) * W + q) * C + c];
            }
            Y[out_off + c] = s / static_cast<double>((r1 - r0) * (c1 - c0));
          }
        }
      }
    }
  }
  instrument::add_madds(X.numel());
  return graph_of(x).record(
      std::move(Y), {x},
      [kind, argmax = std::move(argmax), T, H, W, C, out_h, out_w](const Tensor& g, std::span<Tensor* const> gi) {
        Tensor& gx = *gi[0];
        if (kind == PoolKind::Max) {
          for (std::size_t i = 0; i < g.numel(); ++i) gx[argmax[i]] += g[i];
          return;
        }
        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t i = 0; i < out_h; ++i) {
            const std::size_t r0 = window_begin(i, H, out_h), r1 = window_end(i, H, out_h);
            for (std::size_t j = 0; j < out_w; ++j) {
              const std::size_t c0 = window_begin(j, W, out_w), c1 = window_end(j, W, out_w);
              const double inv = 1.0 / static_cast<double>((r1 - r0) * (c1 - c0));
              const std::size_t out_off = ((t * out_h + i) * out_w + j) * C;
              for (std::size_t r = r0; r < r1; ++r) {
                for (std::size_t q = c0; q < c1; ++q) {
                  for (std::size_t c = 0; c < C; ++c) gx[((t * H + r) * W + q) * C + c] += g[out_off + c] * inv;
                }
              }
            }
          }
        }
      });
}

Var upsample_nearest(Var x, std::size_t out_h, std::size_t out_w) {
  const Tensor& X = x.value();
  require_rank(X, 4, "upsample_nearest");
  const std::size_t T = X.dim(0), H = X.dim(1), W = X.dim(2), C = X.dim(3);
  if (out_h == 0 || out_w == 0) throw DimensionError("upsample_nearest: output size must be positive");
  std::vector<std::size_t> src(T * out_h * out_w);
  Tensor Y(Shape{T, out_h, out_w, C});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < out_h; ++i) {
      const std::size_t si = (i * H) / out_h;
      for (std::size_t j = 0; j < out_w; ++j) {
        const std::size_t sj = (j * W) / out_w;
        const std::size_t o = (t * out_h + i) * out_w + j;
        src[o] = (t * H + si) * W + sj;
        std::copy_n(X.ptr() + src[o] * C, C, Y.ptr() + o * C);
      }
    }
  }
  return graph_of(x).record(std::move(Y), {x}, [src = std::move(src), C](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t o = 0; o < src.size(); ++o) {
      for (std::size_t c = 0; c < C; ++c) (*gi[0])[src[o] * C + c] += g[o * C + c];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor Y = a.value().reshaped(std::move(shape));
  return graph_of(a).record(std::move(Y), {a}, [](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t c = parts.front().value().rank() == 2 ? parts.front().value().dim(1) : 0;
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    require_rank(p.value(), 2, "concat_rows");
    if (p.value().dim(1) != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(p.value().shape()));
    }
    offsets.push_back(rows * c);
    rows += p.value().dim(0);
  }
  Tensor Y(Shape{rows, c});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& P = parts[k].value();
    std::copy(P.data().begin(), P.data().end(), Y.ptr() + offsets[k]);
  }
  return graph_of(parts.front())
      .record(std::move(Y), parts, [offsets](const Tensor& g, std::span<Tensor* const> gi) {
        for (std::size_t k = 0; k < gi.size(); ++k) {
          if (!gi[k]) continue;
          for (std::size_t i = 0; i < gi[k]->numel(); ++i) (*gi[k])[i] += g[offsets[k] + i];
        }
      });
}

Var gather_rows(Var a, std::vector<std::size_t> rows) {
  const Tensor& A = a.value();
  require_rank(A, 2, "gather_rows");
  const std::size_t n = A.dim(0), c = A.dim(1);
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  Tensor Y(Shape{rows.size(), c});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " out of range");
    std::copy_n(A.ptr() + rows[r] * c, c, Y.ptr() + r * c);
  }
  return graph_of(a).record(std::move(Y), {a}, [rows = std::move(rows), c](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double* dst = gi[0]->ptr() + rows[r] * c;
      const double* src = g.ptr() + r * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
}

Var reverse_rows(Var a) {
  require_rank(a.value(), 2, "reverse_rows");
  const std::size_t n = a.value().dim(0);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = n - 1 - i;
  return gather_rows(a, std::move(rows));
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  require_rank(A, 2, "slice_cols");
  const std::size_t r = A.dim(0), c = A.dim(1);
  if (begin >= end || end > c) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                         shape_str(A.shape()));
  }
  const std::size_t w = end - begin;
  Tensor Y(Shape{r, w});
  for (std::size_t i = 0; i < r; ++i) std::copy_n(A.ptr() + i * c + begin, w, Y.ptr() + i * w);
  return graph_of(a).record(std::move(Y), {a}, [r, c, w, begin](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) (*gi[0])[i * c + begin + j] += g[i * w + j];
    }
  });
}

Var causal_conv1d(Var x, Var w, Var b) {
  const Tensor& X = x.value();
  const Tensor& Wt = w.value();
  require_rank(X, 2, "causal_conv1d");
  require_rank(Wt, 2, "causal_conv1d");
  const std::size_t L = X.dim(0), E = X.dim(1), k = Wt.dim(0);
  if (Wt.dim(1) != E || b.value().shape() != Shape{E}) {
    throw DimensionError("causal_conv1d: weights " + shape_str(Wt.shape()) + " / bias " +
                         shape_str(b.value().shape()) + " vs input " + shape_str(X.shape()));
  }
  const Tensor& Bv = b.value();
  Tensor Y(Shape{L, E});
  for (std::size_t t = 0; t < L; ++t) {
    double* y = Y.ptr() + t * E;
    for (std::size_t e = 0; e < E; ++e) y[e] = Bv[e];
    for (std::size_t j = 0; j < k; ++j) {
      if (t + j + 1 < k) continue;
      const double* xr = X.ptr() + (t + j + 1 - k) * E;
      const double* wr = Wt.ptr() + j * E;
      for (std::size_t e = 0; e < E; ++e) y[e] += wr[e] * xr[e];
    }
  }
  instrument::add_madds(L * E * k);
  return graph_of(x).record(std::move(Y), {x, w, b}, [x, w, L, E, k](const Tensor& g, std::span<Tensor* const> gi) {
    const Tensor& X = x.value();
    const Tensor& Wt = w.value();
    for (std::size_t t = 0; t < L; ++t) {
      const double* gy = g.ptr() + t * E;
      if (gi[2]) {
        for (std::size_t e = 0; e < E; ++e) (*gi[2])[e] += gy[e];
      }
      for (std::size_t j = 0; j < k; ++j) {
        if (t + j + 1 < k) continue;
        const std::size_t src = (t + j + 1 - k) * E;
        for (std::size_t e = 0; e < E; ++e) {
          if (gi[0]) (*gi[0])[src + e] += gy[e] * Wt[j * E + e];
          if (gi[1]) (*gi[1])[j * E + e] += gy[e] * X[src + e];
        }
      }
    }
  });
}

namespace {

// Forward recurrence h_t = exp(d_t A) h_{t-1} + d_t u_t B_t, y_t = C_t h_t.
// Any of y / states / decay may be null.
void scan_sweep(const double* U, const double* D, const double* A, const double* B, const double* C, std::size_t L,
                std::size_t E, std::size_t N, double* y, double* states, double* decay) {
  Eigen::ArrayXd h = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(E * N));
  Eigen::ArrayXd abar(static_cast<Eigen::Index>(E * N));
  for (std::size_t t = 0; t < L; ++t) {
    const double* bt = B + t * N;
    const double* ct = C + t * N;
    for (std::size_t e = 0; e < E; ++e) {
      const double d = D[t * E + e];
      for (std::size_t n = 0; n < N; ++n) abar[e * N + n] = d * A[e * N + n];
    }
    abar = abar.exp();
    for (std::size_t e = 0; e < E; ++e) {
      const double du = D[t * E + e] * U[t * E + e];
      const double* ae = abar.data() + e * N;
      double* he = h.data() + e * N;
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        he[n] = ae[n] * he[n] + du * bt[n];
        acc += ct[n] * he[n];
      }
      if (y) y[t * E + e] = acc;
    }
    if (states) std::copy(h.data(), h.data() + E * N, states + t * E * N);
    if (decay) std::copy(abar.data(), abar.data() + E * N, decay + t * E * N);
  }
}

}  // namespace

Var selective_scan(Var u, Var delta, Var A, Var B, Var C) {
  const Tensor& U = u.value();
  const Tensor& D = delta.value();
  const Tensor& Am = A.value();
  const Tensor& Bm = B.value();
  const Tensor& Cm = C.value();
  require_rank(U, 2, "selective_scan");
  require_rank(Am, 2, "selective_scan");
  const std::size_t L = U.dim(0), E = U.dim(1), N = Am.dim(1);
  if (D.shape() != U.shape() || Am.dim(0) != E || Bm.shape() != Shape{L, N} || Cm.shape() != Shape{L, N}) {
    throw DimensionError("selective_scan: u " + shape_str(U.shape()) + ", delta " + shape_str(D.shape()) + ", A " +
                         shape_str(Am.shape()) + ", B " + shape_str(Bm.shape()) + ", C " + shape_str(Cm.shape()));
  }
  for (double d : D.data()) {
    if (!(d > 0.0)) throw DomainError("selective_scan: step size must be positive, got " + std::to_string(d));
  }
  Graph& g = graph_of(u);

  Tensor Y(Shape{L, E});
  scan_sweep(U.ptr(), D.ptr(), Am.ptr(), Bm.ptr(), Cm.ptr(), L, E, N, Y.ptr(), nullptr, nullptr);
  instrument::add_madds(4 * L * E * N + L * E);
  const bool needs_grad = u.requires_grad() || delta.requires_grad() || A.requires_grad() || B.requires_grad() ||
                          C.requires_grad();
  if (!needs_grad) return g.record(std::move(Y), {u, delta, A, B, C}, nullptr);

  // States are recomputed during backward rather than held for the whole
  // graph lifetime: one (L, E, N) scratch instead of one per scan call.
  return g.record(
      std::move(Y), {u, delta, A, B, C}, [u, delta, A, B, C, L, E, N](const Tensor& gy, std::span<Tensor* const> gi) {
        const Tensor& U = u.value();
        const Tensor& D = delta.value();
        const Tensor& Am = A.value();
        const Tensor& Bm = B.value();
        const Tensor& Cm = C.value();
        thread_local std::vector<double> states, decay;
        states.resize(L * E * N);
        decay.resize(L * E * N);
        scan_sweep(U.ptr(), D.ptr(), Am.ptr(), Bm.ptr(), Cm.ptr(), L, E, N, nullptr, states.data(), decay.data());
        // Unused slots write into scratch so the inner loop stays branch-free.
        std::vector<double> scratch_en(gi[2] ? 0 : E * N), scratch_ln(gi[3] && gi[4] ? 0 : L * N);
        double* gA = gi[2] ? gi[2]->ptr() : scratch_en.data();
        double* gB = gi[3] ? gi[3]->ptr() : scratch_ln.data();
        double* gC = gi[4] ? gi[4]->ptr() : scratch_ln.data();
        std::vector<double> gh(E * N, 0.0);
        const std::vector<double> zeros(E * N, 0.0);
        for (std::size_t t = L; t-- > 0;) {
          const double* bt = Bm.ptr() + t * N;
          const double* ct = Cm.ptr() + t * N;
          const double* ht = states.data() + t * E * N;
          const double* hp = t > 0 ? states.data() + (t - 1) * E * N : zeros.data();
          const double* at = decay.data() + t * E * N;
          double* gbt = gB + t * N;
          double* gct = gC + t * N;
          for (std::size_t e = 0; e < E; ++e) {
            const double d = D[t * E + e];
            const double uu = U[t * E + e];
            const double go = gy[t * E + e];
            const double* ae = Am.ptr() + e * N;
            const double* abe = at + e * N;
            const double* hte = ht + e * N;
            const double* hpe = hp + e * N;
            double* ghe = gh.data() + e * N;
            double* gae = gA + e * N;
            double gd = 0.0, gu = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
              const double total = ghe[n] + go * ct[n];
              gct[n] += go * hte[n];
              const double gda = total * hpe[n] * abe[n];
              gd += gda * ae[n] + total * uu * bt[n];
              gae[n] += gda * d;
              gu += total * bt[n];
              gbt[n] += total * d * uu;
              ghe[n] = total * abe[n];
            }
            if (gi[0]) (*gi[0])[t * E + e] += gu * d;
            if (gi[1]) (*gi[1])[t * E + e] += gd;
          }
        }
        instrument::add_madds(14 * L * E * N);
      });
}

Var softmax_rows(Var a) {
  const Tensor& A = a.value();
  if (A.rank() == 0) throw DimensionError("softmax_rows: scalar input");
  const std::size_t c = A.shape().back();
  const std::size_t rows = A.numel() / c;
  Tensor Y(A.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = A.ptr() + r * c;
    double* y = Y.ptr() + r * c;
    const double m = *std::max_element(x, x + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - m);
      s += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= s;
  }
  instrument::add_madds(3 * A.numel());
  Tensor saved = Y;
  return graph_of(a).record(std::move(Y), {a}, [y = std::move(saved), rows, c](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
      for (std::size_t j = 0; j < c; ++j) (*gi[0])[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
    }
  });
}

Var l2_normalize_rows(Var a, double eps) {
  const Tensor& A = a.value();
  if (!(eps >= 0.0)) throw DomainError("l2_normalize_rows: eps must be non-negative");
  if (A.rank() == 0) throw DimensionError("l2_normalize_rows: scalar input");
  const std::size_t c = A.shape().back();
  const std::size_t rows = A.numel() / c;
  Tensor Y(A.shape());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += A[r * c + j] * A[r * c + j];
    s += eps * eps;
    if (s == 0.0) throw DomainError("l2_normalize_rows: zero-norm row " + std::to_string(r));
    norms[r] = std::sqrt(s);
    for (std::size_t j = 0; j < c; ++j) Y[r * c + j] = A[r * c + j] / norms[r];
  }
  instrument::add_madds(2 * A.numel());
  Tensor saved = Y;
  return graph_of(a).record(
      std::move(Y), {a}, [y = std::move(saved), norms = std::move(norms), rows, c](const Tensor& g, std::span<Tensor* const> gi) {
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
          for (std::size_t j = 0; j < c; ++j) {
            (*gi[0])[r * c + j] += (g[r * c + j] - y[r * c + j] * dot) / norms[r];
          }
        }
      });
}

Var cross_entropy_rows(Var logits, std::vector<std::size_t> targets) {
  const Tensor& Z = logits.value();
  require_rank(Z, 2, "cross_entropy_rows");
  const std::size_t rows = Z.dim(0), c = Z.dim(1);
  if (targets.size() != rows) throw DimensionError("cross_entropy_rows: one target per row required");
  Tensor probs(Z.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= c) throw DimensionError("cross_entropy_rows: target out of range");
    const double* z = Z.ptr() + r * c;
    const double m = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(z[j] - lse);
    loss += lse - z[targets[r]];
  }
  loss /= static_cast<double>(rows);
  instrument::add_madds(3 * Z.numel());
  return graph_of(logits).record(
      Tensor::scalar(loss), {logits},
      [probs = std::move(probs), targets = std::move(targets), rows, c](const Tensor& g, std::span<Tensor* const> gi) {
        const double scale = g[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < c; ++j) {
            const double onehot = j == targets[r] ? 1.0 : 0.0;
            (*gi[0])[r * c + j] += scale * (probs[r * c + j] - onehot);
          }
        }
      });
}

}  // namespace muse::ops
