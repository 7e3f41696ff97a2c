// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "muse/autograd.hpp"

namespace muse {

/// Scalar-valued function of a list of graph inputs.
using ScalarFn = std::function<Var(Graph&, std::span<const Var>)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  /// Worst offender: which input, which flat coordinate, and both estimates.
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
  bool passed = true;
};

/// Relative error used by the checker: |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of `f` against central differences
/// (f(x+h) - f(x-h)) / 2h for every coordinate of every input.
/// `h` must lie in [1e-7, 1e-3].
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h, double tol);

}  // namespace muse
