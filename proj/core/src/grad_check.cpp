// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "muse/error.hpp"

namespace muse {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  return f(g, vars).value().item();
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h, double tol) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw ContractError("grad_check: step h must lie in [1e-7, 1e-3]");

  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(g.variable(t));
    Var loss = f(g, vars);
    g.backward(loss);
    for (const Var& v : vars) analytic.push_back(g.grad(v));
  }

  GradCheckReport report;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].numel(); ++i) {
      const double x0 = probe[k][i];
      probe[k][i] = x0 + h;
      const double up = evaluate(f, probe);
      probe[k][i] = x0 - h;
      const double down = evaluate(f, probe);
      probe[k][i] = x0;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[k][i], numeric);
      ++report.coordinates_checked;
      if (err > report.max_rel_error || report.coordinates_checked == 1) {
        report.max_rel_error = err;
        report.worst_input = k;
        report.worst_index = i;
        report.worst_analytic = analytic[k][i];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace muse
