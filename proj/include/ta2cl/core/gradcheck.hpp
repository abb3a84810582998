// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "ta2cl/core/mat.hpp"
#include "ta2cl/core/tape.hpp"

namespace ta2cl {

/// Builds a scalar loss on `tape` from the leaf `x`.
using ScalarGraph = std::function<Var(GradTape& tape, Var x)>;

/// Compares the tape gradient of f at x with central differences of step h.
/// Returns max over entries of |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
inline double check_grad(const ScalarGraph& f, const Mat& x, double h = 1e-5) {
  Mat analytic;
  {
    GradTape tape;
    Var xv = tape.leaf(x);
    tape.backward(f(tape, xv));
    analytic = xv.grad();
  }
  auto eval = [&](const Mat& at) {
    GradTape tape;
    return f(tape, tape.constant(at)).value()(0, 0);
  };
  double worst = 0.0;
  Mat probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.flat()[i];
    probe.flat()[i] = orig + h;
    const double fp = eval(probe);
    probe.flat()[i] = orig - h;
    const double fm = eval(probe);
    probe.flat()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic.flat()[i];
    worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12));
  }
  return worst;
}

}  // namespace ta2cl
